"""
Observation X of the mixed fractional OU process and its martingale transforms.

    dX_t = (-theta X_t + u(t)) dt + d xi_t,    X_0 = 0

Z, Q and M are computed from X through the kernel tables; every function
accepts a single path [n+1] or a batch [n_paths, n+1] along the last axis.

"""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from src.model.kernel import KernelBundle
from src.model.mfbm import NoisePath
from src.utils.errors import DimensionError, DomainError, NumericalBlowUpError
from src.utils.io import RunManifest, read_csv_columns, write_csv
from src.utils.numerics import TimeGrid, differentiate, integrate

log = logging.getLogger(__name__)

INPUT_KINDS = ("zero", "constant", "optimal", "tabulated")
PATH_COLUMNS = ("t", "xi", "X", "Z", "Q", "M")


def _check_nodes(values: np.ndarray, grid: TimeGrid, name: str):
    if values.shape[-1] != grid.n_nodes:
        raise DimensionError(f"{name} has {values.shape[-1]} nodes, grid has {grid.n_nodes}")


def transform_v(u: np.ndarray, kernel: KernelBundle) -> np.ndarray:
    """v(t) = d/d<M>_t int_0^t g(s, t) u(s) ds"""
    u = np.asarray(u, dtype=float)
    _check_nodes(u, kernel.grid, "u")
    return differentiate(u @ kernel.quadrature, kernel.grid, kernel.m_prime)


@dataclass(frozen=True)
class InputSignal:
    kind: str
    u: np.ndarray
    v: np.ndarray
    alpha: float = 0.0

    def __post_init__(self):
        assert self.kind in INPUT_KINDS, f"unknown input kind {self.kind}"
        if self.u.shape != self.v.shape:
            raise DimensionError(f"u has shape {self.u.shape}, v has shape {self.v.shape}")

    @classmethod
    def zero(cls, grid: TimeGrid) -> "InputSignal":
        return cls("zero", np.zeros(grid.n_nodes), np.zeros(grid.n_nodes))

    @classmethod
    def constant(cls, alpha: float, kernel: KernelBundle) -> "InputSignal":
        u = np.full(kernel.grid.n_nodes, float(alpha))
        return cls("constant", u, transform_v(u, kernel), alpha=float(alpha))

    @classmethod
    def tabulated(
        cls,
        t: np.ndarray,
        u: np.ndarray,
        kernel: KernelBundle,
        v: Optional[np.ndarray] = None,
    ) -> "InputSignal":
        """u (and optionally v) given at times t, linearly interpolated onto the grid"""
        nodes = kernel.grid.nodes
        u_grid = np.interp(nodes, t, u)
        v_grid = transform_v(u_grid, kernel) if v is None else np.interp(nodes, t, v)
        return cls("tabulated", u_grid, v_grid)

    @classmethod
    def from_csv(cls, path: str, kernel: KernelBundle) -> "InputSignal":
        try:
            cols = read_csv_columns(path, ("t", "u", "v"))
            return cls.tabulated(cols["t"], cols["u"], kernel, v=cols["v"])
        except KeyError:
            cols = read_csv_columns(path, ("t", "u"))
            return cls.tabulated(cols["t"], cols["u"], kernel)

    def energy(self, kernel: KernelBundle) -> float:
        """(1/T) int v^2 d<M>"""
        return integrate(self.v**2, kernel.weights) / kernel.horizon


def mean_constant_drift(t, theta: float, alpha: float):
    """E X_t under u = alpha"""
    return (alpha / theta) * (1.0 - np.exp(-theta * np.asarray(t, dtype=float)))


def simulate_x(
    noise: Union[NoisePath, np.ndarray],
    theta: float,
    signal: InputSignal,
    grid: Optional[TimeGrid] = None,
) -> np.ndarray:
    """Euler scheme driven by exact noise increments; X_0 = 0.

    noise is a NoisePath or an increment array [..., n_steps] (then grid is required).
    """
    if isinstance(noise, NoisePath):
        grid, increments = noise.grid, noise.increments
    else:
        assert grid is not None, "grid is required with raw increments"
        increments = np.asarray(noise, dtype=float)
    if theta < 0:
        raise DomainError(f"theta must be nonnegative, got {theta}")
    if increments.shape[-1] != grid.n_steps:
        raise DimensionError(f"{increments.shape[-1]} increments for {grid.n_steps} steps")
    _check_nodes(signal.u, grid, "u")

    dt = grid.dt
    x = np.zeros((*increments.shape[:-1], grid.n_nodes))
    for i in range(grid.n_steps):
        x[..., i + 1] = x[..., i] + (-theta * x[..., i] + signal.u[i]) * dt + increments[..., i]
    if not np.all(np.isfinite(x)):
        raise NumericalBlowUpError("non-finite X path", node=int(np.argmax(~np.isfinite(x)) % grid.n_nodes))
    return x


def transform_z(x: np.ndarray, kernel: KernelBundle) -> np.ndarray:
    """Z(t_j) = sum_{i<j} g(s_i, t_j) (X_{i+1} - X_i)"""
    x = np.asarray(x, dtype=float)
    _check_nodes(x, kernel.grid, "X")
    strict = np.triu(kernel.g_full, k=1)[:-1]
    return np.diff(x, axis=-1) @ strict


def reconstruct_x(z: np.ndarray, kernel: KernelBundle) -> np.ndarray:
    """X(t_j) = sum_{i<j} g_hat(s_i, t_j) (Z_{i+1} - Z_i), the inverse of transform_z"""
    z = np.asarray(z, dtype=float)
    _check_nodes(z, kernel.grid, "Z")
    return np.diff(z, axis=-1) @ np.triu(kernel.ghat_table, k=1)[:-1]


def _psi_sum(z: np.ndarray, kernel: KernelBundle) -> np.ndarray:
    """int_0^t psi(s, s) dZ_s by left-point sums"""
    weighted = np.diff(z, axis=-1) * kernel.psi_diag[:-1]
    out = np.zeros_like(z)
    out[..., 1:] = np.cumsum(weighted, axis=-1)
    return out


def compute_q(z: np.ndarray, kernel: KernelBundle) -> np.ndarray:
    """Q_t = int_0^t psi(s, t) dZ_s with psi(s, t) = (1/m'(t) + 1/m'(s)) / 2"""
    z = np.asarray(z, dtype=float)
    _check_nodes(z, kernel.grid, "Z")
    return 0.5 * (kernel.psi_diag * z + _psi_sum(z, kernel))


def q_from_derivative(x: np.ndarray, kernel: KernelBundle) -> np.ndarray:
    """Q_t = d/d<M>_t int_0^t g(s, t) X_s ds"""
    return transform_v(x, kernel)


@dataclass(frozen=True)
class ZetaPath:
    grid: TimeGrid
    zeta1: np.ndarray
    zeta2: np.ndarray


def accumulate_zeta(z: np.ndarray, kernel: KernelBundle) -> ZetaPath:
    """zeta = (Z_t, int_0^t psi(s, s) dZ_s); d zeta = b(t) dZ"""
    z = np.asarray(z, dtype=float)
    _check_nodes(z, kernel.grid, "Z")
    return ZetaPath(kernel.grid, z.copy(), _psi_sum(z, kernel))


def q_from_zeta(zeta: ZetaPath, kernel: KernelBundle) -> np.ndarray:
    """Q = (1/2) l(t)* zeta with l(t) = (psi(t, t), 1)"""
    return 0.5 * (kernel.psi_diag * zeta.zeta1 + zeta.zeta2)


def extract_m(
    z: np.ndarray,
    q: np.ndarray,
    signal: InputSignal,
    theta: float,
    kernel: KernelBundle,
) -> np.ndarray:
    """M(t_j) = Z(t_j) - sum_{i<j} (v_i - theta Q_i) (m_{i+1} - m_i)"""
    drift = (signal.v[:-1] - theta * np.asarray(q)[..., :-1]) * kernel.dm
    m = np.array(z, dtype=float)
    m[..., 1:] -= np.cumsum(drift, axis=-1)
    return m


@dataclass(frozen=True)
class PathBundle:
    grid: TimeGrid
    theta_true: float
    input: InputSignal
    xi: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    Q: np.ndarray
    M: np.ndarray
    seed: Optional[int] = None


def build_path_bundle(
    noise: NoisePath,
    theta: float,
    signal: InputSignal,
    kernel: KernelBundle,
) -> PathBundle:
    if noise.grid != kernel.grid:
        raise DimensionError(f"noise grid {noise.grid} differs from kernel grid {kernel.grid}")
    x = simulate_x(noise, theta, signal)
    z = transform_z(x, kernel)
    q = compute_q(z, kernel)
    return PathBundle(
        grid=kernel.grid,
        theta_true=theta,
        input=signal,
        xi=noise.values,
        X=x,
        Z=z,
        Q=q,
        M=extract_m(z, q, signal, theta, kernel),
        seed=noise.seed,
    )


def write_paths_csv(path: str, bundle: PathBundle, manifest: Optional[RunManifest] = None) -> str:
    cols = [bundle.grid.nodes, bundle.xi, bundle.X, bundle.Z, bundle.Q, bundle.M]
    return write_csv(path, PATH_COLUMNS, zip(*cols), manifest)


def read_paths_csv(path: str):
    """(grid, columns) from a CSV written by write_paths_csv"""
    cols = read_csv_columns(path, PATH_COLUMNS)
    t = cols["t"]
    grid = TimeGrid(float(t[-1]), len(t) - 1)
    if np.max(np.abs(grid.nodes - t)) > 1e-9 * max(1.0, grid.horizon):
        raise DimensionError(f"{path} is not on a uniform grid")
    return grid, cols
