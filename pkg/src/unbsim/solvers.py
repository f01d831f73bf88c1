"""Band-assignment objectives and solvers.

The shared objective shape is linear-plus-pairwise over one-hot rows: a
per-(station, band) gain and a per-band pairwise penalty between co-banded
stations.  The quadratic part always stores positive penalty magnitudes;
under a maximize sense penalties are subtracted from the gains, under a
minimize sense they are added, so in both senses co-banding similar stations
is what the optimizer avoids.

Solvers: exact enumeration (with a visit counter and a hard cap), restarted
coordinate local search for instances past the cap, a uniform random
baseline, and decode-table oracles that score every assignment against the
realized outcomes of one simulation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from unbsim.core import Assignment, DecodeStats
from unbsim.sinr import DecodeTable

__all__ = [
    "ENUMERATION_CAP",
    "QuadraticAssignmentObjective",
    "SolveResult",
    "OracleResult",
    "build_p3_objective",
    "build_p4_objective",
    "solve_enumeration",
    "solve_local_search",
    "random_assignment",
    "oracle_best_assignment",
]

ENUMERATION_CAP = 1_000_000
_CHUNK = 65_536


@dataclass(frozen=True)
class QuadraticAssignmentObjective:
    """Linear-plus-pairwise objective over one-hot assignment rows.

    value(X) = sum_m sum_b linear[b,m]*X[b,m]  -/+  sum_m sum_{b<k}
    quadratic[m,b,k]*X[b,m]*X[k,m], subtracting the pairwise term when
    maximizing and adding it when minimizing.
    """

    linear: np.ndarray     # (B, M)
    quadratic: np.ndarray  # (M, B, B) symmetric, zero diagonal
    sense: str

    def __post_init__(self):
        lin = np.asarray(self.linear, dtype=float)
        quad = np.asarray(self.quadratic, dtype=float)
        if lin.ndim != 2:
            raise ValueError("linear coefficients must form a (B, M) matrix")
        B, M = lin.shape
        if quad.shape != (M, B, B):
            raise ValueError("quadratic coefficients must form an (M, B, B) tensor")
        if not (np.isfinite(lin).all() and np.isfinite(quad).all()):
            raise ValueError("objective coefficients must be finite")
        if not np.allclose(quad, np.swapaxes(quad, 1, 2), atol=1e-12):
            raise ValueError("quadratic matrices must be symmetric")
        if quad.size and np.abs(np.diagonal(quad, axis1=1, axis2=2)).max() > 0:
            raise ValueError("quadratic diagonals must be zero")
        if self.sense not in ("maximize", "minimize"):
            raise ValueError("sense must be 'maximize' or 'minimize'")
        for name, arr in (("linear", lin), ("quadratic", quad)):
            arr = np.ascontiguousarray(arr)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def num_bs(self) -> int:
        return self.linear.shape[0]

    @property
    def num_bands(self) -> int:
        return self.linear.shape[1]

    def values_of(self, bands: np.ndarray) -> np.ndarray:
        """Objective values for a (K, B) batch of 1-based band vectors."""
        bands = np.asarray(bands, dtype=np.int64)
        if bands.ndim != 2 or bands.shape[1] != self.num_bs:
            raise ValueError("band vectors must form a (K, B) matrix")
        B = self.num_bs
        lin = self.linear[np.arange(B)[None, :], bands - 1].sum(axis=1)
        pen = np.zeros(len(bands))
        for m in range(1, self.num_bands + 1):
            co = (bands == m).astype(float)
            pen += ((co @ self.quadratic[m - 1]) * co).sum(axis=1)
        pen /= 2.0  # symmetric matrix counts each b<k pair twice
        return lin - pen if self.sense == "maximize" else lin + pen

    def value(self, x: Assignment) -> float:
        if x.num_bs != self.num_bs or x.num_bands != self.num_bands:
            raise ValueError("assignment shape does not match the objective")
        return float(self.values_of(x.bands[None, :])[0])

    def better(self, a: float, b: float) -> bool:
        """True iff value a strictly beats value b under this sense."""
        return a > b if self.sense == "maximize" else a < b


@dataclass(frozen=True)
class SolveResult:
    assignment: Assignment
    value: float
    visited: int  # assignments evaluated


@dataclass(frozen=True)
class OracleResult:
    assignment: Assignment
    rate: float
    metric: str


def build_p3_objective(stats: DecodeStats) -> QuadraticAssignmentObjective:
    """Maximize summed decode rates minus pairwise co-decode overlap.

    Unmeasured cells are zeros in the stats and stay zero here, so the solver
    never rewards an unmeasured station-band pairing.
    """
    B, M = stats.num_bs, stats.num_bands
    quad = np.ascontiguousarray(np.moveaxis(stats.r_corr, 2, 0)).copy()
    idx = np.arange(B)
    quad[:, idx, idx] = 0.0
    return QuadraticAssignmentObjective(linear=stats.s.copy(), quadratic=quad, sense="maximize")


def build_p4_objective(bs_locations, eta: float = 1.0, num_bands: int = 1) -> QuadraticAssignmentObjective:
    """Minimize inverse-distance closeness between co-banded stations.

    Pair cost is separation^(-eta); separations under a meter clamp to one
    meter, matching the channel model's distance floor.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    locs = np.asarray(bs_locations, dtype=float)
    if locs.ndim != 2 or locs.shape[1] != 2 or len(locs) < 1:
        raise ValueError("station locations must form a (B, 2) array")
    B = len(locs)
    diff = locs[:, None, :] - locs[None, :, :]
    dist = np.maximum(np.hypot(diff[..., 0], diff[..., 1]), 1.0)
    cost = dist ** (-eta)
    cost[np.arange(B), np.arange(B)] = 0.0
    return QuadraticAssignmentObjective(
        linear=np.zeros((B, num_bands)),
        quadratic=np.repeat(cost[None, :, :], num_bands, axis=0),
        sense="minimize",
    )


def _band_vector_chunk(lo: int, hi: int, num_bs: int, num_bands: int) -> np.ndarray:
    """Rows lo..hi-1 of the lexicographic enumeration of band vectors."""
    idx = np.arange(lo, hi, dtype=np.int64)[:, None]
    place = num_bands ** np.arange(num_bs - 1, -1, -1, dtype=np.int64)
    return (idx // place) % num_bands + 1


def solve_enumeration(obj: QuadraticAssignmentObjective, cap: int = ENUMERATION_CAP) -> SolveResult:
    """Exact optimum by exhaustive enumeration, first-found on ties.

    Band vectors are visited in lexicographic order and a tie keeps the
    earlier vector, so the reported optimum is the lexicographically smallest
    one.  Refuses instances past the cap; use solve_local_search there.
    """
    B, M = obj.num_bs, obj.num_bands
    total = M ** B
    if total > cap:
        raise ValueError(
            f"{M}^{B} = {total} assignments exceeds the cap of {cap}; "
            "use solve_local_search for instances this large"
        )
    best_val = None
    best_bands = None
    for lo in range(0, total, _CHUNK):
        chunk = _band_vector_chunk(lo, min(lo + _CHUNK, total), B, M)
        vals = obj.values_of(chunk)
        i = int(np.argmax(vals) if obj.sense == "maximize" else np.argmin(vals))
        if best_val is None or obj.better(float(vals[i]), best_val):
            best_val = float(vals[i])
            best_bands = chunk[i]
    return SolveResult(
        assignment=Assignment.from_bands(best_bands, M), value=best_val, visited=total
    )


def solve_local_search(
    obj: QuadraticAssignmentObjective,
    restarts: int = 20,
    rng: np.random.Generator | None = None,
) -> SolveResult:
    """Restarted coordinate descent: move one station at a time to its best
    band until a full pass finds no strict improvement.

    Deterministic given the generator.  Ties across restarts keep the
    lexicographically smaller band vector.
    """
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    if rng is None:
        rng = np.random.default_rng(0)
    B, M = obj.num_bs, obj.num_bands
    best_val = None
    best_bands = None
    evaluated = 0
    for _ in range(restarts):
        bands = rng.integers(1, M + 1, B)
        val = float(obj.values_of(bands[None, :])[0])
        evaluated += 1
        improved = True
        while improved:
            improved = False
            for b in range(B):
                cand = np.repeat(bands[None, :], M, axis=0)
                cand[:, b] = np.arange(1, M + 1)
                vals = obj.values_of(cand)
                evaluated += M
                i = int(np.argmax(vals) if obj.sense == "maximize" else np.argmin(vals))
                if obj.better(float(vals[i]), val):
                    val = float(vals[i])
                    bands = cand[i]
                    improved = True
        if (
            best_val is None
            or obj.better(val, best_val)
            or (val == best_val and tuple(bands) < tuple(best_bands))
        ):
            best_val = val
            best_bands = bands
    return SolveResult(
        assignment=Assignment.from_bands(best_bands, M), value=best_val, visited=evaluated
    )


def random_assignment(num_bs: int, num_bands: int, rng: np.random.Generator) -> Assignment:
    """Uniform independent band per station."""
    return Assignment.from_bands(rng.integers(1, num_bands + 1, num_bs), num_bands)


def _oracle_packet_counts(table: DecodeTable, bands_chunk: np.ndarray) -> np.ndarray:
    sig, counts = table.packet_band_masks
    K, B = bands_chunk.shape
    M = table.num_bands
    bsmask = np.zeros((K, M), dtype=np.uint64)
    rows = np.arange(K)
    for b in range(B):
        np.bitwise_or.at(bsmask, (rows, bands_chunk[:, b] - 1), np.uint64(1 << b))
    # split into sub-chunks so the (k, U, M) broadcast stays small
    out = np.empty(K, dtype=np.int64)
    step = max(16, 6_000_000 // max(1, len(sig) * M))
    for lo in range(0, K, step):
        sl = slice(lo, min(lo + step, K))
        hit = (sig[None, :, :] & bsmask[sl, None, :]) != 0
        out[sl] = hit.any(axis=2) @ counts
    return out


def _subset_sums(table: DecodeTable) -> np.ndarray:
    """F[m, s] = number of band-m transmissions whose decoder set is within s."""
    F = table.band_mask_counts.astype(np.int64).copy()
    size = F.shape[1]
    for b in range(table.num_bs):
        bit = 1 << b
        has = (np.arange(size) & bit).astype(bool)
        F[:, has] += F[:, ~has]
    return F


def oracle_best_assignment(
    table: DecodeTable,
    metric: str = "packet",
    cap: int = ENUMERATION_CAP,
) -> OracleResult:
    """Best assignment in hindsight for one realized decode table.

    Enumerates all band vectors in lexicographic order and scores each against
    the table; ties keep the earlier vector.  Scoring is exact integer
    counting, aggregated so the per-assignment cost does not scale with the
    raw transmission count.
    """
    if metric not in ("packet", "transmission"):
        raise ValueError("metric must be 'packet' or 'transmission'")
    if table.num_events == 0:
        raise ValueError("oracle is undefined on an empty table")
    B, M = table.num_bs, table.num_bands
    total = M ** B
    if total > cap:
        raise ValueError(f"{M}^{B} = {total} assignments exceeds the cap of {cap}")
    if metric == "packet":
        denom = table.num_packets
    else:
        denom = table.num_events
        F = _subset_sums(table)
        n_per_band = table.band_mask_counts.sum(axis=1).astype(np.int64)
        full = (1 << B) - 1
    best_count = -1
    best_bands = None
    for lo in range(0, total, _CHUNK):
        chunk = _band_vector_chunk(lo, min(lo + _CHUNK, total), B, M)
        if metric == "packet":
            decoded = _oracle_packet_counts(table, chunk)
        else:
            bsmask = np.zeros((len(chunk), M), dtype=np.int64)
            rows = np.arange(len(chunk))
            for b in range(B):
                np.bitwise_or.at(bsmask, (rows, chunk[:, b] - 1), 1 << b)
            decoded = sum(n_per_band[m] - F[m, full ^ bsmask[:, m]] for m in range(M))
        i = int(np.argmax(decoded))
        if decoded[i] > best_count:
            best_count = int(decoded[i])
            best_bands = chunk[i]
    return OracleResult(
        assignment=Assignment.from_bands(best_bands, M),
        rate=best_count / denom,
        metric=metric,
    )
