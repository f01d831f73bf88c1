"""SINR computation and decode tables.

A transmission is decodable by a station iff its SINR clears the threshold;
interference aggregates every time-overlapping event, weighted by how much of
the interferer's spectrum falls inside the victim's occupied band.  The decode
table holds that outcome for every (station, UNB transmission) pair and is
assignment-independent: tuning decisions are applied afterwards, so a single
table prices all band assignments of one realization.

``interference_power_mw`` and ``sinr_db`` are the scalar reference
definitions; ``compute_sinr_table`` is the vectorized bulk path the harness
uses and is tested for equality against them.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from unbsim.channel import ChannelRealization, sample_fading_db
from unbsim.core import Assignment, SimConfig, TransmissionEvent
from unbsim.traffic import INTERFERER, UNB, TrafficTrace

__all__ = [
    "time_freq_overlap",
    "interference_power_mw",
    "sinr_db",
    "SinrTable",
    "DecodeTable",
    "compute_sinr_table",
    "build_decode_table",
    "packet_decoded",
    "metrics",
    "save_decode_table",
    "load_decode_table",
]

_TARGET_CHUNK = 8192  # targets per interference block, bounds pair-array memory


def time_freq_overlap(e1: TransmissionEvent, e2: TransmissionEvent) -> bool:
    """True when the closed time intervals intersect and the spectra touch."""
    if e1.start_time > e2.end_time or e2.start_time > e1.end_time:
        return False
    return abs(e1.carrier_freq - e2.carrier_freq) <= (e1.bandwidth + e2.bandwidth) / 2.0


def _band_intersection_hz(target: TransmissionEvent, other: TransmissionEvent) -> float:
    lo = max(target.carrier_freq - target.bandwidth / 2.0,
             other.carrier_freq - other.bandwidth / 2.0)
    hi = min(target.carrier_freq + target.bandwidth / 2.0,
             other.carrier_freq + other.bandwidth / 2.0)
    return max(hi - lo, 0.0)


def interference_power_mw(
    target: TransmissionEvent,
    bs: int,
    all_events: list[TransmissionEvent],
    powers_dbm: np.ndarray,
) -> float:
    """Aggregate interference (mW) seen by ``target`` at station ``bs``.

    ``powers_dbm[bs, j]`` is the received power of ``all_events[j]`` at that
    station.  Repetitions of the target's own packet never self-interfere;
    everything else contributes its received power scaled by the fraction of
    its bandwidth that lands inside the target's occupied band.
    """
    total = 0.0
    for j, ev in enumerate(all_events):
        if (
            ev.kind == target.kind
            and ev.source_id == target.source_id
            and ev.packet_id == target.packet_id
        ):
            continue
        if not time_freq_overlap(target, ev):
            continue
        frac = _band_intersection_hz(target, ev) / ev.bandwidth
        if frac > 0.0:
            total += 10.0 ** (powers_dbm[bs, j] / 10.0) * frac
    return total


def sinr_db(signal_dbm: float, noise_dbm: float, interference_mw: float) -> float:
    """SINR in dB with the denominator summed in linear milliwatts."""
    if interference_mw < 0:
        raise ValueError("interference power cannot be negative")
    denom = 10.0 ** (noise_dbm / 10.0) + interference_mw
    return 10.0 * np.log10(10.0 ** (signal_dbm / 10.0) / denom)


@dataclass(frozen=True)
class DecodeTable:
    """Per-(station, transmission) decode indicators for one realization.

    ``d[b, n]`` says station b would decode UNB transmission n if it were
    listening on that transmission's band.  Columns follow trace time order.
    """

    d: np.ndarray             # (B, N) uint8
    event_band: np.ndarray    # (N,) 1-based band of each transmission
    event_packet: np.ndarray  # (N,) packet id of each transmission
    num_bands: int

    def __post_init__(self):
        d = np.ascontiguousarray(np.asarray(self.d, dtype=np.uint8))
        band = np.ascontiguousarray(np.asarray(self.event_band, dtype=np.int64))
        pkt = np.ascontiguousarray(np.asarray(self.event_packet, dtype=np.int64))
        if d.ndim != 2 or band.shape != (d.shape[1],) or pkt.shape != (d.shape[1],):
            raise ValueError("inconsistent decode-table shapes")
        if d.size and d.max() > 1:
            raise ValueError("decode indicators must be binary")
        if band.size and (band.min() < 1 or band.max() > self.num_bands):
            raise ValueError("event bands out of range")
        for name, arr in (("d", d), ("event_band", band), ("event_packet", pkt)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def num_bs(self) -> int:
        return self.d.shape[0]

    @property
    def num_events(self) -> int:
        return self.d.shape[1]

    @cached_property
    def _packet_grouping(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(unique packet ids, event order grouped by packet, group offsets)."""
        order = np.argsort(self.event_packet, kind="stable")
        ids, starts = np.unique(self.event_packet[order], return_index=True)
        return ids, order, starts

    @property
    def num_packets(self) -> int:
        return len(self._packet_grouping[0])

    @cached_property
    def decode_masks(self) -> np.ndarray:
        """Per-event bitmask of decoding stations (bit b = station b)."""
        if self.num_bs > 63:
            raise ValueError("bitmask aggregation supports at most 63 stations")
        masks = np.zeros(self.num_events, dtype=np.uint64)
        for b in range(self.num_bs):
            masks |= self.d[b].astype(np.uint64) << np.uint64(b)
        return masks

    @cached_property
    def band_mask_counts(self) -> np.ndarray:
        """(num_bands, 2^B) transmission counts per (band, decoder bitmask)."""
        size = 1 << self.num_bs
        key = (self.event_band.astype(np.int64) - 1) * size + self.decode_masks.astype(np.int64)
        return np.bincount(key, minlength=self.num_bands * size).reshape(self.num_bands, size)

    @cached_property
    def packet_band_masks(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique per-packet decode signatures.

        Returns (sig, counts): ``sig[u, m-1]`` is the union of decoder bitmasks
        over a packet's transmissions on band m; ``counts[u]`` how many packets
        share that signature.  A packet is decodable under an assignment iff
        some band's signature intersects the stations tuned to that band.
        """
        ids, order, starts = self._packet_grouping
        pkt_dense = np.zeros(self.num_events, dtype=np.int64)
        pkt_dense[order] = np.repeat(np.arange(len(ids)), np.diff(np.append(starts, len(order))))
        sig = np.zeros((len(ids), self.num_bands), dtype=np.uint64)
        np.bitwise_or.at(sig, (pkt_dense, self.event_band - 1), self.decode_masks)
        uniq, counts = np.unique(sig, axis=0, return_counts=True)
        return uniq, counts


@dataclass(frozen=True)
class SinrTable:
    """Raw per-(station, transmission) SINR, before thresholding.

    Kept separate from DecodeTable so threshold sweeps can reuse one
    simulation pass: every random draw upstream is threshold-independent.
    """

    sinr_db: np.ndarray       # (B, N) float
    event_band: np.ndarray
    event_packet: np.ndarray
    num_bands: int

    def threshold(self, tau_db: float) -> DecodeTable:
        return DecodeTable(
            d=(self.sinr_db >= tau_db).astype(np.uint8),
            event_band=self.event_band,
            event_packet=self.event_packet,
            num_bands=self.num_bands,
        )


def _received_powers_dbm(
    trace: TrafficTrace,
    realization: ChannelRealization,
    config: SimConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.random.Generator]:
    """(B, num_events) received powers, plus the reserved noise stream."""
    col = trace.source_id + np.where(trace.kind == INTERFERER, realization.num_iot, 0)
    tx = np.where(trace.kind == INTERFERER, config.tx_power_interferer, config.tx_power_iot)
    powers = tx[None, :] + realization.pathloss_db[:, col] + realization.shadowing_db[:, col]
    streams = rng.spawn(realization.num_bs + 1)  # one per station plus the noise stream
    if config.fading_enabled:
        for b in range(realization.num_bs):
            powers[b] += sample_fading_db(config.fading_scale, streams[b], size=len(trace))
    noise_stream = streams[-1]
    return powers, noise_stream


def compute_sinr_table(
    trace: TrafficTrace,
    realization: ChannelRealization,
    config: SimConfig,
    rng: np.random.Generator,
) -> SinrTable:
    """Vectorized SINR of every UNB transmission at every station.

    The trace must contain all interference sources (UNB plus interferer
    events) over the same window.  Fading is drawn here, per (station, event).
    """
    powers_dbm, noise_stream = _received_powers_dbm(trace, realization, config, rng)
    powers_lin = 10.0 ** (powers_dbm / 10.0)

    tgt = np.nonzero(trace.kind == UNB)[0]
    n_t = len(tgt)
    num_bs = realization.num_bs
    interference = np.zeros((n_t, num_bs))

    classes = []
    for code, denom_dur in ((UNB, config.tx_duration), (INTERFERER, config.interferer_duration)):
        idx = np.nonzero(trace.kind == code)[0]
        if len(idx):
            classes.append((code, idx, trace.start_time[idx], denom_dur))

    t_start = trace.start_time[tgt]
    t_freq = trace.carrier_freq[tgt]
    t_dur = trace.duration[tgt]
    t_src = trace.source_id[tgt]
    t_pkt = trace.packet_id[tgt]
    half_w = trace.bandwidth[tgt] / 2.0

    for lo_t in range(0, n_t, _TARGET_CHUNK):
        sl = slice(lo_t, min(lo_t + _TARGET_CHUNK, n_t))
        cs, cf, cd = t_start[sl], t_freq[sl], t_dur[sl]
        chw = half_w[sl]
        csrc, cpkt = t_src[sl], t_pkt[sl]
        n_c = len(cs)
        for code, idx, starts, dur in classes:
            lo = np.searchsorted(starts, cs - dur, side="left")
            hi = np.searchsorted(starts, cs + cd, side="right")
            counts = hi - lo
            total = int(counts.sum())
            if total == 0:
                continue
            t_rep = np.repeat(np.arange(n_c), counts)
            offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
            j_local = np.arange(total) - np.repeat(offsets, counts) + np.repeat(lo, counts)
            j_global = idx[j_local]
            if code == UNB:
                same = (trace.source_id[j_global] == csrc[t_rep]) & (
                    trace.packet_id[j_global] == cpkt[t_rep]
                )
                if same.any():
                    keepm = ~same
                    t_rep, j_global = t_rep[keepm], j_global[keepm]
            o_freq = trace.carrier_freq[j_global]
            o_hbw = trace.bandwidth[j_global] / 2.0
            inter = np.minimum(cf[t_rep] + chw[t_rep], o_freq + o_hbw) - np.maximum(
                cf[t_rep] - chw[t_rep], o_freq - o_hbw
            )
            pos = inter > 0.0
            if not pos.any():
                continue
            t_rep, j_global, inter = t_rep[pos], j_global[pos], inter[pos]
            frac = inter / trace.bandwidth[j_global]
            for b in range(num_bs):
                interference[sl, b] += np.bincount(
                    t_rep, weights=powers_lin[b, j_global] * frac, minlength=n_c
                )

    noise_dbm = np.full(n_t, config.noise_power)
    if config.noise_jitter_std > 0.0:
        noise_dbm = noise_dbm + config.noise_jitter_std * noise_stream.standard_normal(n_t)
    noise_lin = 10.0 ** (noise_dbm / 10.0)

    signal_lin = powers_lin[:, tgt]
    sinr = 10.0 * np.log10(signal_lin / (noise_lin[None, :] + interference.T))
    return SinrTable(
        sinr_db=sinr,
        event_band=trace.band[tgt],
        event_packet=trace.packet_id[tgt],
        num_bands=config.num_bands,
    )


def build_decode_table(
    trace: TrafficTrace,
    realization: ChannelRealization,
    config: SimConfig,
    rng: np.random.Generator,
    tau_db: float | None = None,
) -> DecodeTable:
    """Simulate decode outcomes for every (station, UNB transmission) pair.

    ``tau_db`` overrides the configured threshold; +-inf give the degenerate
    none/all tables used by sanity checks.
    """
    table = compute_sinr_table(trace, realization, config, rng)
    return table.threshold(config.sinr_threshold if tau_db is None else tau_db)


def _decoded_events(table: DecodeTable, x: Assignment) -> np.ndarray:
    if x.num_bs != table.num_bs or x.num_bands != table.num_bands:
        raise ValueError("assignment shape does not match the table")
    bands = x.bands
    decoded = np.zeros(table.num_events, dtype=bool)
    for b in range(table.num_bs):
        decoded |= (table.d[b] == 1) & (table.event_band == bands[b])
    return decoded


def packet_decoded(table: DecodeTable, packet_id: int, x: Assignment) -> bool:
    """True iff any repetition of the packet is decoded under assignment x."""
    sel = table.event_packet == packet_id
    if not sel.any():
        raise ValueError(f"packet {packet_id} not present in the table")
    return bool(_decoded_events(table, x)[sel].any())


def metrics(table: DecodeTable, x: Assignment) -> tuple[float, float]:
    """(packet decode probability, transmission decode rate) under assignment x."""
    if table.num_events == 0:
        raise ValueError("metrics are undefined on an empty table")
    decoded = _decoded_events(table, x)
    rate = float(decoded.mean())
    ids, order, starts = table._packet_grouping
    per_packet = np.logical_or.reduceat(decoded[order], starts)
    return float(per_packet.mean()), rate


def save_decode_table(table: DecodeTable, path) -> None:
    """Write the columnar text form: event id, packet id, band, per-station bits."""
    with open(path, "w") as fh:
        fh.write(f"# decode-table stations={table.num_bs} bands={table.num_bands}\n")
        fh.write("# columns: event packet band " +
                 " ".join(f"d{b+1}" for b in range(table.num_bs)) + "\n")
        for n in range(table.num_events):
            bits = " ".join(str(int(v)) for v in table.d[:, n])
            fh.write(f"{n} {int(table.event_packet[n])} {int(table.event_band[n])} {bits}\n")


def load_decode_table(path) -> DecodeTable:
    header_bands = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for part in line[1:].split():
                    if part.startswith("bands="):
                        header_bands = int(part.split("=", 1)[1])
                continue
            rows.append([int(tok) for tok in line.split()])
    if not rows:
        raise ValueError(f"no decode rows in {path}")
    arr = np.asarray(rows, dtype=np.int64)
    band = arr[:, 2]
    return DecodeTable(
        d=arr[:, 3:].T.astype(np.uint8),
        event_band=band,
        event_packet=arr[:, 1],
        num_bands=header_bands if header_bands is not None else int(band.max()),
    )
