"""Spatial topology draws and unslotted-ALOHA traffic generation.

Traces are stored column-wise (one numpy array per event attribute) because a
Table-I-scale hour holds ~1e5 events; ``TrafficTrace.events`` materializes
``TransmissionEvent`` objects on demand for inspection and tests.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from unbsim.core import SimConfig, Topology, TransmissionEvent, band_of_frequency

__all__ = [
    "UNB",
    "INTERFERER",
    "TrafficTrace",
    "generate_topology",
    "build_interferer_band_probs",
    "draw_interferer_bands",
    "generate_unb_traffic",
    "generate_interferer_traffic",
    "merge_traces",
]

UNB = 0          # kind code: ultra-narrowband uplink repetition
INTERFERER = 1   # kind code: wideband interferer burst

_KIND_NAMES = {UNB: "unb", INTERFERER: "interferer"}


@dataclass(frozen=True)
class TrafficTrace:
    """Time-sorted transmission events over one observation window."""

    horizon: float
    num_bands: int
    source_id: np.ndarray    # per-kind source index
    kind: np.ndarray         # UNB or INTERFERER
    packet_id: np.ndarray    # unique within kind; repetitions share it
    rep_index: np.ndarray
    start_time: np.ndarray
    duration: np.ndarray
    carrier_freq: np.ndarray
    band: np.ndarray         # 1-based band of the carrier
    bandwidth: np.ndarray

    def __post_init__(self):
        n = len(self.start_time)
        for name in (
            "source_id", "kind", "packet_id", "rep_index",
            "start_time", "duration", "carrier_freq", "band", "bandwidth",
        ):
            arr = np.ascontiguousarray(getattr(self, name))
            if len(arr) != n:
                raise ValueError("trace columns must share one length")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if n:
            if np.any(np.diff(self.start_time) < 0):
                raise ValueError("events must be sorted by start time")
            if self.start_time[0] < 0:
                raise ValueError("events must start at or after t=0")
            if np.max(self.start_time + self.duration) > self.horizon * (1 + 1e-12) + 1e-9:
                raise ValueError("events must end inside the horizon")
            if self.band.min() < 1 or self.band.max() > self.num_bands:
                raise ValueError("band indices out of range")

    def __len__(self) -> int:
        return len(self.start_time)

    @property
    def num_unb_events(self) -> int:
        return int(np.count_nonzero(self.kind == UNB))

    @property
    def num_unb_packets(self) -> int:
        mask = self.kind == UNB
        return len(np.unique(self.packet_id[mask])) if mask.any() else 0

    @property
    def events(self) -> list[TransmissionEvent]:
        """Materialized event objects, in time order."""
        return [
            TransmissionEvent(
                source_id=int(self.source_id[i]),
                kind=_KIND_NAMES[int(self.kind[i])],
                packet_id=int(self.packet_id[i]),
                rep_index=int(self.rep_index[i]),
                start_time=float(self.start_time[i]),
                duration=float(self.duration[i]),
                carrier_freq=float(self.carrier_freq[i]),
                band=int(self.band[i]),
                bandwidth=float(self.bandwidth[i]),
            )
            for i in range(len(self))
        ]


def _empty_trace(horizon: float, num_bands: int) -> TrafficTrace:
    z = np.zeros(0)
    zi = np.zeros(0, dtype=np.int64)
    return TrafficTrace(
        horizon=horizon, num_bands=num_bands,
        source_id=zi, kind=zi.astype(np.uint8), packet_id=zi, rep_index=zi,
        start_time=z, duration=z, carrier_freq=z, band=zi, bandwidth=z,
    )


def _sorted_trace(horizon, num_bands, src, kind, pkt, rep, start, dur, freq, band, bw):
    order = np.argsort(start, kind="stable")
    return TrafficTrace(
        horizon=horizon, num_bands=num_bands,
        source_id=src[order], kind=kind[order], packet_id=pkt[order],
        rep_index=rep[order], start_time=start[order], duration=dur[order],
        carrier_freq=freq[order], band=band[order], bandwidth=bw[order],
    )


def build_interferer_band_probs(num_bands: int, rng: np.random.Generator, n: int | None = None):
    """Random band-preference vector(s): iid U(0,1) weights normalized to sum 1.

    Returns shape (num_bands,) for n=None, else (n, num_bands).
    """
    if num_bands < 1:
        raise ValueError("num_bands must be >= 1")
    rows = 1 if n is None else n
    w = rng.uniform(size=(rows, num_bands))
    bad = w.sum(axis=1) == 0.0
    while bad.any():  # measure-zero, but normalization must never divide by 0
        w[bad] = rng.uniform(size=(int(bad.sum()), num_bands))
        bad = w.sum(axis=1) == 0.0
    probs = w / w.sum(axis=1, keepdims=True)
    return probs[0] if n is None else probs


def draw_interferer_bands(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Sample one operating band per interferer from its preference row.

    Inverse-CDF over the row cumsum; the result is 1-based and fixed for
    the realization, so training and evaluation see the same band layout.
    """
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 2:
        raise ValueError("probs must be a (n, M) matrix")
    n, m = probs.shape
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    cum = np.cumsum(probs, axis=1)
    u = rng.uniform(size=n)
    bands = 1 + (u[:, None] > cum).sum(axis=1)
    return np.minimum(bands, m).astype(np.int64)


def generate_topology(config: SimConfig, rng: np.random.Generator) -> Topology:
    """Draw station and source positions for one realization.

    Counts are Poisson with the configured means; positions are uniform over
    the square.  Stations, devices and interferers are drawn from separate
    child streams so that changing one population's size leaves the others'
    draws untouched (station lists are prefix-stable across num_bs).
    """
    bs_rng, iot_rng, intf_rng = rng.spawn(3)
    side = config.area_side
    bs = bs_rng.uniform(0.0, side, size=(config.num_bs, 2))
    n_iot = int(iot_rng.poisson(config.mean_iot_count))
    iot = iot_rng.uniform(0.0, side, size=(n_iot, 2))
    n_intf = int(intf_rng.poisson(config.mean_interferer_count))
    intf = intf_rng.uniform(0.0, side, size=(n_intf, 2))
    probs = build_interferer_band_probs(config.num_bands, intf_rng, n=n_intf)
    if n_intf == 0:
        probs = np.zeros((0, config.num_bands))
    return Topology(
        area_side=side,
        bs_locations=bs,
        iot_locations=iot,
        interferer_locations=intf,
        interferer_band_probs=probs,
        interferer_bands=draw_interferer_bands(probs, intf_rng),
    )


def generate_unb_traffic(
    topology: Topology,
    config: SimConfig,
    rng: np.random.Generator,
    band_lock: int | None = None,
    horizon: float | None = None,
) -> TrafficTrace:
    """Generate the UNB uplink trace over [0, horizon].

    Each device emits packets as a Poisson process at ``packets_per_hour``;
    every packet is sent ``repetitions`` times back to back, each repetition
    on a fresh uniform carrier.  With ``band_lock=m`` carriers stay inside
    band m (the training regime).  Repetitions whose airtime would cross the
    horizon are dropped, so edge packets can carry fewer than R copies.
    """
    horizon = config.sim_horizon if horizon is None else float(horizon)
    n_dev = len(topology.iot_locations)
    rate = config.packets_per_hour * horizon / 3600.0
    w = config.tx_bandwidth
    if band_lock is not None and not (1 <= band_lock <= config.num_bands):
        raise ValueError("band_lock must be a valid band index")
    if n_dev == 0 or config.packets_per_hour == 0.0:
        return _empty_trace(horizon, config.num_bands)

    counts = rng.poisson(rate, size=n_dev)
    n_pkt = int(counts.sum())
    if n_pkt == 0:
        return _empty_trace(horizon, config.num_bands)
    device = np.repeat(np.arange(n_dev, dtype=np.int64), counts)
    t0 = rng.uniform(0.0, horizon, size=n_pkt)
    if band_lock is None:
        lo, hi = w / 2.0, config.spectrum_width - w / 2.0
    else:
        lo = (band_lock - 1) * config.band_width + w / 2.0
        hi = band_lock * config.band_width - w / 2.0
    freqs = rng.uniform(lo, hi, size=(n_pkt, config.repetitions))

    T = config.tx_duration
    reps = np.arange(config.repetitions, dtype=np.float64)
    starts = t0[:, None] + reps[None, :] * T
    keep = starts + T <= horizon
    pkt_grid = np.broadcast_to(np.arange(n_pkt, dtype=np.int64)[:, None], starts.shape)
    dev_grid = np.broadcast_to(device[:, None], starts.shape)
    rep_grid = np.broadcast_to(np.arange(config.repetitions, dtype=np.int64)[None, :], starts.shape)

    start = starts[keep]
    freq = freqs[keep]
    n_ev = len(start)
    band = band_of_frequency(freq, config.band_width, config.num_bands) if n_ev else np.zeros(0, dtype=np.int64)
    return _sorted_trace(
        horizon, config.num_bands,
        src=dev_grid[keep], kind=np.zeros(n_ev, dtype=np.uint8),
        pkt=pkt_grid[keep], rep=rep_grid[keep],
        start=start, dur=np.full(n_ev, T), freq=freq,
        band=np.asarray(band, dtype=np.int64), bw=np.full(n_ev, w),
    )


def generate_interferer_traffic(
    topology: Topology,
    config: SimConfig,
    rng: np.random.Generator,
    horizon: float | None = None,
) -> TrafficTrace:
    """Generate wideband interferer bursts over [0, horizon].

    Each interferer is a Poisson source locked to its topology band for the
    whole realization; every burst picks a uniform carrier that keeps the
    burst's bandwidth inside that band.
    """
    horizon = config.sim_horizon if horizon is None else float(horizon)
    if config.interferer_bandwidth > config.band_width:
        raise ValueError("interferer bandwidth cannot exceed the band width")
    n_src = len(topology.interferer_locations)
    rate = config.interferer_packets_per_hour * horizon / 3600.0
    if n_src == 0 or rate == 0.0:
        return _empty_trace(horizon, config.num_bands)

    counts = rng.poisson(rate, size=n_src)
    n_burst = int(counts.sum())
    if n_burst == 0:
        return _empty_trace(horizon, config.num_bands)
    source = np.repeat(np.arange(n_src, dtype=np.int64), counts)
    t0 = rng.uniform(0.0, horizon, size=n_burst)
    u_freq = rng.uniform(size=n_burst)

    band0 = topology.interferer_bands[source] - 1
    wp = config.interferer_bandwidth
    lo = band0 * config.band_width + wp / 2.0
    hi = (band0 + 1) * config.band_width - wp / 2.0
    freq = lo + u_freq * (hi - lo)  # degenerates to the band center when wp == W

    Tp = config.interferer_duration
    keep = t0 + Tp <= horizon
    start = t0[keep]
    n_ev = len(start)
    return _sorted_trace(
        horizon, config.num_bands,
        src=source[keep], kind=np.ones(n_ev, dtype=np.uint8),
        pkt=np.arange(n_burst, dtype=np.int64)[keep],
        rep=np.zeros(n_ev, dtype=np.int64),
        start=start, dur=np.full(n_ev, Tp), freq=freq[keep],
        band=(band0[keep] + 1).astype(np.int64), bw=np.full(n_ev, wp),
    )


def merge_traces(*traces: TrafficTrace) -> TrafficTrace:
    """Merge traces over the same window into one time-sorted trace.

    Packet ids stay unique only within a kind; downstream consumers key
    packets by (kind, packet_id).
    """
    if not traces:
        raise ValueError("nothing to merge")
    horizon = traces[0].horizon
    num_bands = traces[0].num_bands
    for t in traces:
        if t.horizon != horizon or t.num_bands != num_bands:
            raise ValueError("traces must share horizon and band plan")
    traces = [t for t in traces if len(t)] or [traces[0]]
    cat = lambda name: np.concatenate([getattr(t, name) for t in traces])
    return _sorted_trace(
        horizon, num_bands,
        src=cat("source_id"), kind=cat("kind"), pkt=cat("packet_id"),
        rep=cat("rep_index"), start=cat("start_time"), dur=cat("duration"),
        freq=cat("carrier_freq"), band=cat("band"), bw=cat("bandwidth"),
    )
