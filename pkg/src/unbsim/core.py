"""Core value types shared by the simulator, the training pass and the solvers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Iterable

import numpy as np

__all__ = [
    "Point2D",
    "SimConfig",
    "Topology",
    "TransmissionEvent",
    "Assignment",
    "DecodeStats",
    "distance",
    "band_of_frequency",
    "validate_assignment",
]


@dataclass(frozen=True)
class Point2D:
    """Planar point, coordinates in meters."""

    x: float
    y: float


def _as_xy(p) -> tuple[float, float]:
    if isinstance(p, Point2D):
        return p.x, p.y
    x, y = p
    return float(x), float(y)


def distance(a, b) -> float:
    """Euclidean distance in meters between two points (Point2D or any (x, y) pair)."""
    ax, ay = _as_xy(a)
    bx, by = _as_xy(b)
    return math.hypot(ax - bx, ay - by)


def band_of_frequency(phi, band_width: float, num_bands: int):
    """Map a carrier frequency to its multiplexing band index (1-based).

    A carrier sitting exactly on a band boundary belongs to the upper band,
    except at the top edge of the spectrum which stays in band ``num_bands``.
    Accepts scalars or arrays; rejects frequencies outside [0, num_bands * band_width].
    """
    if band_width <= 0 or num_bands < 1:
        raise ValueError("band_width must be positive and num_bands >= 1")
    phi_arr = np.asarray(phi, dtype=float)
    top = num_bands * band_width
    if np.any(phi_arr < 0) or np.any(phi_arr > top):
        raise ValueError(f"carrier frequency outside [0, {top}]")
    band = np.minimum(np.floor(phi_arr / band_width).astype(np.int64) + 1, num_bands)
    if np.isscalar(phi) or phi_arr.ndim == 0:
        return int(band)
    return band


@dataclass(frozen=True)
class SimConfig:
    """Scenario parameters for one simulated network.

    Frequencies are Hz, powers dBm, durations seconds, distances meters.
    ``tx_duration`` is derived from the payload size and is not independently
    settable: a packet of ``packet_bits`` at ``tx_bandwidth`` baud occupies
    exactly ``packet_bits / tx_bandwidth`` seconds.
    """

    num_bs: int = 6                      # base stations
    num_bands: int = 3                   # multiplexing bands a BS can tune to
    band_width: float = 200e3            # width of one multiplexing band
    tx_bandwidth: float = 600.0          # occupied bandwidth of one UNB uplink signal
    interferer_bandwidth: float = 125e3  # occupied bandwidth of a wideband interferer
    tx_power_iot: float = 14.0           # UNB device EIRP, dBm
    tx_power_interferer: float = 14.0    # interferer EIRP, dBm
    noise_power: float = -146.0          # receiver noise floor in the UNB bandwidth, dBm
    repetitions: int = 3                 # consecutive copies sent per packet
    packets_per_hour: float = 3.0        # UNB packet rate per device
    interferer_packets_per_hour: float = 30.0
    packet_bits: float = 2080.0          # payload+overhead bits per transmission
    tx_duration: float | None = None     # derived: packet_bits / tx_bandwidth
    interferer_duration: float | None = None  # defaults to tx_duration
    sinr_threshold: float = 10.0         # decode threshold, dB
    area_side: float = 13e3              # simulation square side
    mean_iot_count: float = 5e3          # expected number of UNB devices in the square
    mean_interferer_count: float = 2e3   # expected number of interferers
    pathloss_exponent: float = 3.5
    shadowing_std: float = 9.0           # lognormal shadowing sigma, dB
    shadowing_decorrelation: float = 200.0  # exponential kernel decay distance
    fading_scale: float = 1.0            # Rayleigh amplitude scale, E[h^2] = fading_scale^2
    fading_enabled: bool = True          # disable for deterministic link-budget checks
    noise_jitter_std: float = 0.0        # per-transmission Gaussian dB jitter on the noise floor
    training_duration: float = 3600.0    # total budget for the measurement campaign
    sim_horizon: float = 3600.0          # evaluation window
    heuristic_eta: float = 1.0           # distance-decay exponent of the location heuristic
    probe_band: int = 1                  # band measured by the low-overhead campaign
    cross_bs_shadowing_correlated: bool = False
    record_timing: bool = False          # measure per-strategy wall time (breaks run-to-run byte equality)
    master_seed: int = 1

    def __post_init__(self):
        if self.num_bs < 1 or self.num_bands < 1 or self.repetitions < 1:
            raise ValueError("num_bs, num_bands and repetitions must be >= 1")
        if not (0 < self.tx_bandwidth < self.band_width):
            raise ValueError("need 0 < tx_bandwidth < band_width")
        if not (0 < self.interferer_bandwidth <= self.band_width):
            raise ValueError("need 0 < interferer_bandwidth <= band_width")
        if self.packet_bits <= 0:
            raise ValueError("packet_bits must be positive")
        derived = self.packet_bits / self.tx_bandwidth
        if self.tx_duration is None:
            object.__setattr__(self, "tx_duration", derived)
        elif self.tx_duration != derived:
            raise ValueError(
                f"tx_duration must equal packet_bits / tx_bandwidth = {derived!r}"
            )
        if self.interferer_duration is None:
            object.__setattr__(self, "interferer_duration", self.tx_duration)
        elif self.interferer_duration <= 0:
            raise ValueError("interferer_duration must be positive")
        for name in ("tx_power_iot", "tx_power_interferer", "noise_power"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        # +-inf thresholds are allowed as degenerate all/none-decode scenarios.
        if math.isnan(self.sinr_threshold):
            raise ValueError("sinr_threshold must not be NaN")
        if self.area_side <= 0:
            raise ValueError("area_side must be positive")
        if self.mean_iot_count < 0 or self.mean_interferer_count < 0:
            raise ValueError("mean source counts must be nonnegative")
        if self.packets_per_hour < 0 or self.interferer_packets_per_hour < 0:
            raise ValueError("packet rates must be nonnegative")
        if self.pathloss_exponent <= 0:
            raise ValueError("pathloss_exponent must be positive")
        if self.shadowing_std < 0:
            raise ValueError("shadowing_std must be nonnegative")
        if self.shadowing_decorrelation <= 0:
            raise ValueError("shadowing_decorrelation must be positive")
        if self.fading_scale <= 0:
            raise ValueError("fading_scale must be positive")
        if self.noise_jitter_std < 0:
            raise ValueError("noise_jitter_std must be nonnegative")
        if self.training_duration <= 0 or self.sim_horizon <= 0:
            raise ValueError("training_duration and sim_horizon must be positive")
        if self.heuristic_eta <= 0:
            raise ValueError("heuristic_eta must be positive")
        if not (1 <= self.probe_band <= self.num_bands):
            raise ValueError("probe_band must lie in 1..num_bands")

    @property
    def spectrum_width(self) -> float:
        """Total hopping range num_bands * band_width."""
        return self.num_bands * self.band_width


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Topology:
    """One draw of node positions, all contained in the simulation square.

    Location arrays have shape (n, 2); ``interferer_band_probs`` has one
    probability row per interferer and sums to 1 along axis 1.  Each
    interferer keeps a single operating band for the whole realization,
    held in ``interferer_bands`` (1-based).  When omitted, the band
    defaults to each row's highest-preference entry; simulation draws
    sample it properly and pass it in.
    """

    area_side: float
    bs_locations: np.ndarray
    iot_locations: np.ndarray
    interferer_locations: np.ndarray
    interferer_band_probs: np.ndarray
    interferer_bands: np.ndarray | None = None

    def __post_init__(self):
        for name in ("bs_locations", "iot_locations", "interferer_locations"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1, 2)
            if arr.size and (arr.min() < 0 or arr.max() > self.area_side):
                raise ValueError(f"{name} outside [0, {self.area_side}]^2")
            object.__setattr__(self, name, _freeze(arr))
        probs = np.asarray(self.interferer_band_probs, dtype=float)
        if len(self.interferer_locations) == 0:
            probs = probs.reshape(0, probs.shape[-1] if probs.ndim else 0)
        else:
            probs = probs.reshape(len(self.interferer_locations), -1)
        if probs.size:
            if probs.min() < 0 or not np.allclose(probs.sum(axis=1), 1.0, atol=1e-9):
                raise ValueError("interferer_band_probs rows must be distributions")
        object.__setattr__(self, "interferer_band_probs", _freeze(probs))
        if self.interferer_bands is None:
            bands = probs.argmax(axis=1).astype(np.int64) + 1 if probs.size \
                else np.zeros(len(probs), dtype=np.int64)
        else:
            bands = np.asarray(self.interferer_bands, dtype=np.int64).reshape(-1)
        if len(bands) != len(probs):
            raise ValueError("interferer_bands length must match the interferer count")
        if bands.size and (bands.min() < 1 or bands.max() > probs.shape[1]):
            raise ValueError("interferer_bands entries must lie in 1..M")
        object.__setattr__(self, "interferer_bands", _freeze(bands))

    @property
    def num_bs(self) -> int:
        return len(self.bs_locations)


@dataclass(frozen=True)
class TransmissionEvent:
    """A single on-air transmission (one repetition of a packet, or one interferer burst)."""

    source_id: int       # index into the topology's device or interferer list
    kind: str            # "unb" or "interferer"
    packet_id: int       # trace-wide packet counter; repetitions share it
    rep_index: int       # 0-based repetition number within the packet
    start_time: float    # seconds
    duration: float      # seconds
    carrier_freq: float  # Hz, center of the occupied band
    band: int            # 1-based multiplexing band of the carrier
    bandwidth: float     # Hz occupied around the carrier

    def __post_init__(self):
        if self.kind not in ("unb", "interferer"):
            raise ValueError(f"unknown event kind {self.kind!r}")

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration


def validate_assignment(x: np.ndarray, num_bs: int, num_bands: int) -> int | None:
    """Check that x is a binary (num_bs, num_bands) matrix with one-hot rows.

    Returns None when valid, else the index of the first offending row.
    Shape mismatches raise, since no row can be blamed for them.
    """
    x = np.asarray(x)
    if x.shape != (num_bs, num_bands):
        raise ValueError(f"assignment shape {x.shape} != {(num_bs, num_bands)}")
    binary = (x == 0) | (x == 1)
    ok_rows = binary.all(axis=1) & (x.sum(axis=1) == 1)
    bad = np.nonzero(~ok_rows)[0]
    return int(bad[0]) if bad.size else None


@dataclass(frozen=True, eq=False)
class Assignment:
    """Base-station-to-band assignment: one-hot rows of an (num_bs, num_bands) matrix."""

    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.uint8)
        bad = validate_assignment(x, x.shape[0], x.shape[1] if x.ndim == 2 else -1)
        if bad is not None:
            raise ValueError(f"row {bad} is not one-hot")
        object.__setattr__(self, "x", _freeze(x))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Assignment):
            return NotImplemented
        return self.x.shape == other.x.shape and bool(np.array_equal(self.x, other.x))

    def __hash__(self) -> int:
        return hash((self.x.shape, self.x.tobytes()))

    @classmethod
    def from_bands(cls, bands: Iterable[int], num_bands: int) -> "Assignment":
        """Build from a 1-based band index per base station."""
        bands = np.asarray(list(bands), dtype=np.int64)
        if bands.size and (bands.min() < 1 or bands.max() > num_bands):
            raise ValueError("band indices must lie in 1..num_bands")
        x = np.zeros((len(bands), num_bands), dtype=np.uint8)
        x[np.arange(len(bands)), bands - 1] = 1
        return cls(x)

    @property
    def num_bs(self) -> int:
        return self.x.shape[0]

    @property
    def num_bands(self) -> int:
        return self.x.shape[1]

    @property
    def bands(self) -> np.ndarray:
        """1-based band index per base station."""
        return np.argmax(self.x, axis=1) + 1

    def compact(self) -> str:
        """Hyphen-joined 1-based band string, e.g. '1-3-2-2-1-3'."""
        return "-".join(str(int(b)) for b in self.bands)


@dataclass(frozen=True)
class DecodeStats:
    """Measured per-band decode statistics.

    ``s[b, m-1]`` estimates the probability that base station b decodes a
    transmission while listening on band m; ``r_corr[b, k, m-1]`` estimates the
    probability that stations b and k both decode it.  Counts carry the number
    of samples behind each cell; a zero count marks the cell as unmeasured and
    its value is pinned to 0.
    """

    s: np.ndarray         # (B, M) decode rates
    r_corr: np.ndarray    # (B, B, M) pairwise co-decode rates, symmetric, diag = s
    s_counts: np.ndarray  # (B, M) sample counts
    r_counts: np.ndarray  # (B, B, M) pair sample counts

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        r = np.asarray(self.r_corr, dtype=float)
        sc = np.asarray(self.s_counts, dtype=np.int64)
        rc = np.asarray(self.r_counts, dtype=np.int64)
        B, M = s.shape
        if r.shape != (B, B, M) or sc.shape != (B, M) or rc.shape != (B, B, M):
            raise ValueError("inconsistent DecodeStats shapes")
        if s.min(initial=0.0) < 0 or s.max(initial=0.0) > 1:
            raise ValueError("s entries must lie in [0, 1]")
        if r.min(initial=0.0) < 0 or r.max(initial=0.0) > 1:
            raise ValueError("r_corr entries must lie in [0, 1]")
        if not np.allclose(r, np.swapaxes(r, 0, 1), atol=1e-12):
            raise ValueError("r_corr must be symmetric in (b, k)")
        if np.any(s[sc == 0] != 0) or np.any(r[rc == 0] != 0):
            raise ValueError("unmeasured cells must hold value 0")
        for name, arr in (("s", s), ("r_corr", r), ("s_counts", sc), ("r_counts", rc)):
            object.__setattr__(self, name, _freeze(arr))

    @property
    def num_bs(self) -> int:
        return self.s.shape[0]

    @property
    def num_bands(self) -> int:
        return self.s.shape[1]

    def unmeasured_cells(self) -> int:
        """Number of (b, m) plus (b <= k, m) cells with no samples behind them."""
        b_idx, k_idx = np.triu_indices(self.num_bs)
        return int((self.s_counts == 0).sum() + (self.r_counts[b_idx, k_idx, :] == 0).sum())
