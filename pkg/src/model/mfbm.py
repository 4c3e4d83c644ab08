"""
Exact Gaussian simulation of the mixed fractional Brownian motion xi = W + B^H.

The increment covariance on a uniform grid is factorized once (Cholesky) and the
factor is shared by every replication. Each path draws its own standard normals
from a generator seeded by split_seed(root, index), so paths can be produced in
any order or in parallel with identical results.

"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional

import numpy as np
import scipy.linalg

from src.utils.errors import CholeskyError, DomainError
from src.utils.numerics import TimeGrid

log = logging.getLogger(__name__)

HURST_EXCLUSION = 1e-6
_MASK64 = (1 << 64) - 1
_GOLDEN64 = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class HurstParam:
    value: float

    def __post_init__(self):
        h = float(self.value)
        if not 0.0 < h < 1.0:
            raise DomainError(f"H must lie in (0, 1), got {h}")
        if abs(h - 0.5) < HURST_EXCLUSION:
            raise DomainError("H must differ from 1/2")
        object.__setattr__(self, "value", h)

    @property
    def rough(self) -> bool:
        return self.value < 0.5

    def __float__(self):
        return self.value


def as_hurst(H) -> HurstParam:
    return H if isinstance(H, HurstParam) else HurstParam(H)


def split_seed(root: int, index: int) -> int:
    """Per-path seed: root XOR a splitmix64 scramble of the path index"""
    z = ((index + 1) * _GOLDEN64) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return (int(root) & _MASK64) ^ z


def mfbm_covariance(s: float, t: float, H) -> float:
    """Cov(xi_s, xi_t) = min(s, t) + (s^2H + t^2H - |t - s|^2H) / 2"""
    if s < 0 or t < 0:
        raise DomainError(f"times must be nonnegative, got s={s}, t={t}")
    h2 = 2.0 * float(as_hurst(H))
    return min(s, t) + 0.5 * (s**h2 + t**h2 - abs(t - s) ** h2)


def increment_covariance(grid: TimeGrid, H) -> np.ndarray:
    """Covariance of (xi_{t_{i+1}} - xi_{t_i})_i: Delta I + fractional Gaussian noise"""
    h2 = 2.0 * float(as_hurst(H))
    dt = grid.dt
    lag = np.arange(grid.n_steps, dtype=float)
    fgn = 0.5 * dt**h2 * (np.abs(lag + 1) ** h2 + np.abs(lag - 1) ** h2 - 2.0 * lag**h2)
    cov = scipy.linalg.toeplitz(fgn)
    cov[np.diag_indices_from(cov)] += dt
    return cov


@lru_cache(maxsize=8)
def _cholesky_factor(horizon: float, n_steps: int, H: float) -> np.ndarray:
    grid = TimeGrid(horizon, n_steps)
    cov = increment_covariance(grid, H)
    try:
        factor = scipy.linalg.cholesky(cov, lower=True)
    except np.linalg.LinAlgError:
        log.warning("Cholesky failed for H=%s n=%d, retrying with 1e-12 jitter", H, n_steps)
        cov[np.diag_indices_from(cov)] += 1e-12
        try:
            factor = scipy.linalg.cholesky(cov, lower=True)
        except np.linalg.LinAlgError as exc:
            raise CholeskyError(
                f"increment covariance is not positive definite for H={H}, n={n_steps}; "
                "jitter 1e-12 was not enough, try a coarser grid"
            ) from exc
    factor.flags.writeable = False
    return factor


def cholesky_factor(grid: TimeGrid, H) -> np.ndarray:
    return _cholesky_factor(grid.horizon, grid.n_steps, float(as_hurst(H)))


@dataclass(frozen=True)
class NoisePath:
    grid: TimeGrid
    increments: np.ndarray
    seed: int

    @property
    def values(self) -> np.ndarray:
        """xi on the grid, starting at 0"""
        return np.concatenate([[0.0], np.cumsum(self.increments)])


def standard_normals(grid: TimeGrid, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(grid.n_steps)


def sample_increments(
    grid: TimeGrid,
    H,
    seeds: List[int],
    factor: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Increment matrix [len(seeds), n_steps], one row per seed"""
    if factor is None:
        factor = cholesky_factor(grid, H)
    normals = np.stack([standard_normals(grid, s) for s in seeds])
    return normals @ factor.T


def sample_paths(grid: TimeGrid, H, n_paths: int, seed: int) -> List[NoisePath]:
    assert n_paths >= 1, "n_paths must be positive"
    seeds = [split_seed(seed, j) for j in range(n_paths)]
    increments = sample_increments(grid, H, seeds)
    return [NoisePath(grid, inc, s) for inc, s in zip(increments, seeds)]
