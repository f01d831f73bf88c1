"""Propagation model: log-distance path loss, correlated shadowing, Rayleigh fading.

All gains are in dB and combine additively on top of the transmit power in dBm.
Shadowing is a zero-mean Gaussian field over source positions with covariance
sigma^2 * exp(-d / beta); each base station sees its own field, optionally
correlated across stations through the same exponential kernel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from unbsim.core import SimConfig, Topology

__all__ = [
    "path_loss_db",
    "sample_shadowing",
    "sample_fading_db",
    "received_power_dbm",
    "ChannelRealization",
    "build_channel_realization",
]

# Above this many sources the exact Cholesky factorization is replaced by a
# grid-based field with bilinear interpolation (cell size <= beta / 4).
EXACT_SHADOWING_MAX_SOURCES = 4000

_GRID_NODE_CAP = 2048  # per axis, keeps the FFT embedding under ~300 MB


def path_loss_db(alpha: float, dist_m) -> np.ndarray | float:
    """Log-distance path loss gain -10 * alpha * log10(d), clamped below 1 m.

    Distances are in meters; nonpositive distances are rejected rather than
    clamped because they indicate a broken geometry upstream.
    """
    d = np.asarray(dist_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distances must be positive")
    out = -10.0 * alpha * np.log10(np.maximum(d, 1.0))
    return float(out) if out.ndim == 0 else out


def received_power_dbm(tx_power_dbm, path_loss, shadowing, fading):
    """Received power in dBm: transmit power plus the three dB gain terms."""
    return tx_power_dbm + path_loss + shadowing + fading


def sample_fading_db(fading_scale: float, rng: np.random.Generator, size=None):
    """Draw Rayleigh fading power gain(s) in dB.

    The amplitude h is Rayleigh with E[h^2] = fading_scale^2 and the returned
    gain is 10*log10(h^2).  Scalar when size is None, else an array.
    """
    if fading_scale <= 0:
        raise ValueError("fading_scale must be positive")
    h = rng.rayleigh(scale=fading_scale / np.sqrt(2.0), size=size)
    gain = 20.0 * np.log10(np.maximum(h, 1e-150))
    return float(gain) if size is None else gain


def _robust_cholesky(cov: np.ndarray, scale: float) -> np.ndarray:
    """Cholesky factor with escalating diagonal jitter for near-singular kernels."""
    if not np.allclose(cov, cov.T, atol=1e-10 * max(scale, 1.0)):
        raise ValueError("shadowing covariance must be symmetric")
    for eps in (0.0, 1e-12, 1e-10, 1e-8):
        try:
            return np.linalg.cholesky(cov + eps * scale * np.eye(len(cov)))
        except np.linalg.LinAlgError:
            continue
    raise ValueError(
        "shadowing covariance is not positive semidefinite even after jitter; "
        "check source coordinates for NaN or absurd magnitudes"
    )


def _exp_corr_from_locations(locations: np.ndarray, beta: float) -> np.ndarray:
    g = locations @ locations.T
    sq = np.diag(g)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * g, 0.0)
    return np.exp(-np.sqrt(d2) / beta)


class _GridFieldSampler:
    """Stationary Gaussian field on a regular grid via FFT circulant embedding.

    Sampling one field costs two FFTs of the padded grid; values at arbitrary
    points come from bilinear interpolation with a per-point variance
    correction so the marginal stays exactly sigma^2.
    """

    def __init__(self, points: np.ndarray, sigma: float, beta: float):
        self.sigma = sigma
        self.beta = beta
        cell = beta / 4.0
        lo = points.min(axis=0)
        hi = points.max(axis=0)
        nx = int(np.ceil((hi[0] - lo[0]) / cell)) + 2
        ny = int(np.ceil((hi[1] - lo[1]) / cell)) + 2
        if max(nx, ny) > _GRID_NODE_CAP:
            raise ValueError(
                f"shadowing grid would need {max(nx, ny)} nodes per axis "
                f"(cap {_GRID_NODE_CAP}); decorrelation distance too small for this area"
            )
        self.origin = lo - cell  # one guard cell so interpolation never leaves the grid
        self.cell = cell
        self.shape = (nx + 1, ny + 1)
        self._plan_embedding()
        self._prepare_interpolation(points)

    def _plan_embedding(self):
        from numpy.fft import fft2

        nx, ny = self.shape
        mx, my = self._fast_len(2 * nx), self._fast_len(2 * ny)
        for _ in range(3):
            ix = np.minimum(np.arange(mx), mx - np.arange(mx)) * self.cell
            iy = np.minimum(np.arange(my), my - np.arange(my)) * self.cell
            d = np.hypot(ix[:, None], iy[None, :])
            cov = self.sigma ** 2 * np.exp(-d / self.beta)
            lam = fft2(cov).real
            if lam.min() >= -1e-8 * lam.max():
                break
            mx, my = self._fast_len(2 * mx), self._fast_len(2 * my)
        self.eig = np.maximum(lam, 0.0)
        self.embed_shape = (mx, my)

    @staticmethod
    def _fast_len(n: int) -> int:
        # smallest 5-smooth number >= n keeps numpy's FFT fast without scipy
        best = 1
        p5 = 1
        while p5 < 4 * n:
            p3 = p5
            while p3 < 4 * n:
                p2 = p3
                while p2 < n:
                    p2 *= 2
                if best == 1 or p2 < best:
                    best = p2
                p3 *= 3
            p5 *= 5
        return best

    def _prepare_interpolation(self, points: np.ndarray):
        rel = (points - self.origin) / self.cell
        base = np.floor(rel).astype(np.int64)
        base[:, 0] = np.clip(base[:, 0], 0, self.shape[0] - 2)
        base[:, 1] = np.clip(base[:, 1], 0, self.shape[1] - 2)
        frac = rel - base
        u, v = frac[:, 0], frac[:, 1]
        w = np.stack(
            [(1 - u) * (1 - v), u * (1 - v), (1 - u) * v, u * v], axis=1
        )
        self._base = base
        self._weights = w
        # variance of the bilinear combination of 4 cell corners, relative to sigma^2
        rho_h = np.exp(-self.cell / self.beta)
        rho_d = np.exp(-np.sqrt(2.0) * self.cell / self.beta)
        w00, w10, w01, w11 = w.T
        var_rel = (
            (w ** 2).sum(axis=1)
            + 2 * rho_h * (w00 * w10 + w00 * w01 + w10 * w11 + w01 * w11)
            + 2 * rho_d * (w00 * w11 + w10 * w01)
        )
        self._gain = 1.0 / np.sqrt(var_rel)

    def sample_at_points(self, rng: np.random.Generator) -> np.ndarray:
        from numpy.fft import fft2

        mx, my = self.embed_shape
        noise = rng.standard_normal((mx, my)) + 1j * rng.standard_normal((mx, my))
        spec = np.sqrt(self.eig / (mx * my)) * noise
        grid = fft2(spec).real[: self.shape[0], : self.shape[1]]
        i, j = self._base[:, 0], self._base[:, 1]
        corners = np.stack(
            [grid[i, j], grid[i + 1, j], grid[i, j + 1], grid[i + 1, j + 1]], axis=1
        )
        return (corners * self._weights).sum(axis=1) * self._gain


def sample_shadowing(
    bs_locations,
    source_locations,
    sigma: float,
    beta: float,
    rng: np.random.Generator,
    cross_bs_correlated: bool = False,
    max_exact: int = EXACT_SHADOWING_MAX_SOURCES,
) -> np.ndarray:
    """Sample the (num_bs, num_sources) shadowing matrix in dB.

    Each row is a draw of a zero-mean Gaussian field over the source positions
    with covariance sigma^2 * exp(-d / beta).  Rows are independent unless
    cross_bs_correlated is set, in which case the same kernel evaluated on
    base-station separations ties them together (per-station reproducibility
    across different station counts is lost in that mode).

    Up to ``max_exact`` sources the field is drawn exactly through a Cholesky
    factor; beyond that a grid field with bilinear interpolation is used.
    """
    bs = np.asarray(bs_locations, dtype=float).reshape(-1, 2)
    src = np.asarray(source_locations, dtype=float).reshape(-1, 2)
    num_bs, n = len(bs), len(src)
    if beta <= 0:
        raise ValueError("decorrelation distance must be positive")
    if sigma < 0:
        raise ValueError("shadowing_std must be nonnegative")
    if n == 0 or num_bs == 0 or sigma == 0.0:
        # still consume one child per station so seeds stay aligned
        rng.spawn(num_bs)
        return np.zeros((num_bs, n))

    streams = rng.spawn(num_bs)
    if n <= max_exact:
        corr = _exp_corr_from_locations(src, beta)
        chol = _robust_cholesky(sigma ** 2 * corr, scale=sigma ** 2)
        rows = np.empty((num_bs, n))
        for b, stream in enumerate(streams):
            rows[b] = chol @ stream.standard_normal(n)
    else:
        sampler = _GridFieldSampler(src, sigma, beta)
        rows = np.empty((num_bs, n))
        for b, stream in enumerate(streams):
            rows[b] = sampler.sample_at_points(stream)

    if cross_bs_correlated and num_bs > 1:
        bs_corr = _exp_corr_from_locations(bs, beta)
        l_bs = _robust_cholesky(bs_corr, scale=1.0)
        rows = l_bs @ rows
    return rows


@dataclass(frozen=True)
class ChannelRealization:
    """Static per-(station, source) gains for one topology draw.

    Columns cover the UNB devices first, then the interferers; ``num_iot``
    marks the split.  Fading is not part of the realization because it is
    redrawn per transmission.
    """

    pathloss_db: np.ndarray   # (B, num_sources)
    shadowing_db: np.ndarray  # (B, num_sources)
    num_iot: int

    def __post_init__(self):
        pl = np.asarray(self.pathloss_db, dtype=float)
        sh = np.asarray(self.shadowing_db, dtype=float)
        if pl.shape != sh.shape:
            raise ValueError("pathloss and shadowing shapes differ")
        if not (0 <= self.num_iot <= pl.shape[1]):
            raise ValueError("num_iot out of range")
        for name, arr in (("pathloss_db", pl), ("shadowing_db", sh)):
            arr = np.ascontiguousarray(arr)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def num_bs(self) -> int:
        return self.pathloss_db.shape[0]

    @property
    def num_sources(self) -> int:
        return self.pathloss_db.shape[1]


def build_channel_realization(
    topology: Topology, config: SimConfig, rng: np.random.Generator
) -> ChannelRealization:
    """Compute path loss and draw shadowing for every (station, source) pair."""
    sources = np.vstack([topology.iot_locations, topology.interferer_locations])
    bs = topology.bs_locations
    if len(sources):
        diff = bs[:, None, :] - sources[None, :, :]
        dist = np.sqrt((diff ** 2).sum(axis=2))
        # co-located station and source would give d = 0; clamp into the
        # validity range of the log-distance model instead of rejecting
        pl = -10.0 * config.pathloss_exponent * np.log10(np.maximum(dist, 1.0))
    else:
        pl = np.zeros((len(bs), 0))
    sh = sample_shadowing(
        bs,
        sources,
        config.shadowing_std,
        config.shadowing_decorrelation,
        rng,
        cross_bs_correlated=config.cross_bs_shadowing_correlated,
    )
    return ChannelRealization(pl, sh, num_iot=len(topology.iot_locations))
