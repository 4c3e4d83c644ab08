"""
Fundamental-martingale kernel of the mixed fractional Brownian motion.

For each t_j the kernel g(., t_j) solves

    g(s, t) + H d/ds int_0^t g(r, t) |r - s|^{2H-1} sign(s - r) dr = 1,

discretized per regime:

    H > 1/2: piecewise-linear g with product integration of the second-kind kernel
             H(2H-1)|s-r|^{2H-2}, integrated exactly against each hat function
    H < 1/2: g constant on cells; column j holds the regression coefficients of
             W_{t_j} on the increments of xi over cells 0..j-1, so that
             sum_{i<j} g[i, j] (xi_{i+1} - xi_i) = E[W_{t_j} | xi on the grid]

In the cell form the equation reads (I + K) g = 1 with K[i, k] = Cov(dB_i, dB_k) / dt,
the exact cell average of the continuous operator. The left-hand side evaluated at
r > t extends g(., t) beyond the diagonal; the extension is needed by g_hat.
Integrals against g(., t_j) use the trapezoid rule over nodes 0..j for H > 1/2 and
left cell sums over cells 0..j-1 for H < 1/2 (see quadrature_weights).

"""

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.special
from scipy.integrate import cumulative_trapezoid
from tqdm import tqdm

from src.model.mfbm import HurstParam, as_hurst, cholesky_factor, increment_covariance
from src.utils.errors import InvalidKernelError, SolverError
from src.utils.monitor import log_execution_time
from src.utils.numerics import (
    M_PRIME_FLOOR,
    MeasureWeights,
    TimeGrid,
    differentiate,
    solve_dense,
)

log = logging.getLogger(__name__)

CACHE_FORMAT_VERSION = 2
RESIDUAL_WARN = 1e-10


def lambda_h(H: float) -> float:
    """2H Gamma(3-2H) Gamma(H+1/2) / Gamma(3/2-H)"""
    H = float(H)
    assert 0.0 < H < 1.0, f"H must lie in (0, 1), got {H}"
    gamma = scipy.special.gamma
    return 2.0 * H * gamma(3.0 - 2.0 * H) * gamma(H + 0.5) / gamma(1.5 - H)


##################################### product integration #####################################


def _hat_integrals(
    p0: Callable[[np.ndarray], np.ndarray],
    p1: Callable[[np.ndarray], np.ndarray],
    d: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Right/left half-hat integrals int_0^1 (1-y) k(d -/+ y) dy for a kernel k
    with antiderivatives p0 = int k and p1 = int x k(x)"""
    right = (1.0 - d) * (p0(d) - p0(d - 1.0)) + (p1(d) - p1(d - 1.0))
    left = (1.0 + d) * (p0(d + 1.0) - p0(d)) - (p1(d + 1.0) - p1(d))
    return right, left


def _offset_tables(n_steps: int, dt: float, H: float) -> Tuple[np.ndarray, np.ndarray, float]:
    """Operator weights as functions of the index offset d = i - k in [-n, n].

    Returns (right, left, coupling) such that the discrete kernel operator at row i
    applied to the hat of node k is coupling * (right[d] + left[d]), with only the
    right (left) half present for the first (last) node of a column.
    """
    d = np.arange(-n_steps, n_steps + 1, dtype=float)
    beta = 2.0 * H - 1.0
    if H > 0.5:
        # k(x) = |x|^{beta-1}
        def p0(x):
            return np.sign(x) * np.abs(x) ** beta / beta

        def p1(x):
            return np.abs(x) ** (beta + 1.0) / (beta + 1.0)

        right, left = _hat_integrals(p0, p1, d)
        scale = dt**beta
        coupling = H * (2.0 * H - 1.0)
    else:
        # k(x) = |x|^beta sign(x), differenced across s_i +/- dt/2
        def p0(x):
            return np.abs(x) ** (beta + 1.0) / (beta + 1.0)

        def p1(x):
            return np.sign(x) * np.abs(x) ** (beta + 2.0) / (beta + 2.0)

        r_plus, l_plus = _hat_integrals(p0, p1, d + 0.5)
        r_minus, l_minus = _hat_integrals(p0, p1, d - 0.5)
        right, left = r_plus - r_minus, l_plus - l_minus
        scale = dt**beta
        coupling = H
    return scale * right, scale * left, coupling


@dataclass(frozen=True)
class _OperatorBase:
    grid: TimeGrid
    H: float
    interior: np.ndarray  # [n+1, n+1], row i, col k: right[i-k] + left[i-k]
    right: np.ndarray  # offset table
    left: np.ndarray
    coupling: float

    @classmethod
    def build(cls, grid: TimeGrid, H: float) -> "_OperatorBase":
        n = grid.n_steps
        right, left, coupling = _offset_tables(n, grid.dt, H)
        idx = np.arange(n + 1)
        offset = idx[:, None] - idx[None, :] + n
        interior = right[offset] + left[offset]
        return cls(grid, H, interior, right, left, coupling)

    def column_operator(self, j: int) -> np.ndarray:
        """Discrete kernel operator for the column t_j: rows 0..n, cols 0..j"""
        n = self.grid.n_steps
        rows = np.arange(n + 1)
        op = self.interior[:, : j + 1].copy()
        op[:, 0] = self.right[rows + n]
        op[:, j] = self.left[rows - j + n]
        return op


@dataclass(frozen=True)
class _CellBase:
    """Normal equations of E[W_{t_j} | xi increments on cells 0..j-1], H < 1/2"""

    grid: TimeGrid
    H: float
    operator: np.ndarray  # [n+1, n], Cov(dB_i, dB_k) / dt; row n is the cell beyond T
    factor: np.ndarray  # lower Cholesky factor of I + operator[:n]
    forward: np.ndarray  # factor^{-1} 1

    @classmethod
    def build(cls, grid: TimeGrid, H: float) -> "_CellBase":
        n, dt = grid.n_steps, grid.dt
        extended = TimeGrid(grid.horizon + dt, n + 1)
        operator = increment_covariance(extended, H)[:, :n] / dt
        operator[np.diag_indices(n)] -= 1.0
        # leading blocks of the factor are the factors of the leading systems
        factor = cholesky_factor(grid, H) / np.sqrt(dt)
        forward = scipy.linalg.solve_triangular(factor, np.ones(n), lower=True)
        return cls(grid, H, operator, factor, forward)

    def system(self, j: int) -> np.ndarray:
        return np.eye(j) + self.operator[:j, :j]


_Base = Union[_OperatorBase, _CellBase]


def _build_base(grid: TimeGrid, H: float) -> _Base:
    return _CellBase.build(grid, H) if H < 0.5 else _OperatorBase.build(grid, H)


def _check_residual(system: np.ndarray, g: np.ndarray, j: int):
    residual = float(np.max(np.abs(system @ g - 1.0)))
    if residual > 1e-6:
        raise SolverError(
            f"kernel column {j} residual {residual:.3e} too large",
            condition=float(np.linalg.cond(system)),
        )
    if residual > RESIDUAL_WARN:
        log.warning(f"Kernel column {j} residual {residual:.3e}")


def _solve_cell_column(base: _CellBase, j: int) -> np.ndarray:
    n = base.grid.n_steps
    c = scipy.linalg.solve_triangular(base.factor[:j, :j], base.forward[:j], lower=True, trans="T")
    _check_residual(base.system(j), c, j)
    column = np.empty(n + 1)
    column[:j] = c
    column[j:] = 1.0 - base.operator[j:, :j] @ c
    return column


def solve_g_column(base: _Base, j: int) -> np.ndarray:
    """g(r_i, t_j) for all rows i: solved up to the diagonal, extension beyond it"""
    n = base.grid.n_steps
    if j == 0:
        return np.ones(n + 1)
    if isinstance(base, _CellBase):
        return _solve_cell_column(base, j)
    op = base.column_operator(j)
    system = np.eye(j + 1) + base.coupling * op[: j + 1]
    g = solve_dense(system, np.ones(j + 1))
    _check_residual(system, g, j)
    column = np.empty(n + 1)
    column[: j + 1] = g
    column[j + 1 :] = 1.0 - base.coupling * (op[j + 1 :] @ g)
    return column


@log_execution_time(log)
def solve_g(grid: TimeGrid, H, n_workers: Optional[int] = None, progress: bool = False) -> np.ndarray:
    """Full table g[i, j] = g(s_i, t_j); entries with i > j hold the extension"""
    hurst = as_hurst(H)
    base = _build_base(grid, hurst.value)
    n_workers = n_workers or min(8, os.cpu_count() or 1)
    table = np.empty((grid.n_nodes, grid.n_nodes))
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        columns = pool.map(lambda j: solve_g_column(base, j), range(grid.n_nodes))
        for j, col in enumerate(
            tqdm(columns, total=grid.n_nodes, disable=not progress, desc="kernel columns")
        ):
            table[:, j] = col
    if hurst.value > 0.5:
        solved = table[np.triu_indices(grid.n_nodes)]
        if np.any(solved <= 0.0) or np.any(solved > 1.0 + 1e-12):
            log.warning("g outside (0, 1] for H > 1/2; grid may be too coarse")
    return table


def bracket_at_horizon(horizon: float, H, n_steps: int) -> float:
    """<M>_T from a single column solve on [0, T]"""
    grid = TimeGrid(horizon, n_steps)
    H = as_hurst(H).value
    column = solve_g_column(_build_base(grid, H), grid.n_steps)
    return float(quadrature_weights(grid, H)[:, -1] @ column)


def plugback_residual(
    g_column: np.ndarray,
    grid: TimeGrid,
    H,
    refine: int = 4,
) -> float:
    """Sup-norm residual of the kernel equation for g(., T) (nodes 0..n of the
    column t_n = T) evaluated on a grid refined by `refine`"""
    fine = TimeGrid(grid.horizon, grid.n_steps * refine)
    g_fine = np.interp(fine.nodes, grid.nodes, g_column[: grid.n_nodes])
    base = _OperatorBase.build(fine, as_hurst(H).value)
    op = base.column_operator(fine.n_steps)
    return float(np.max(np.abs(g_fine + base.coupling * (op @ g_fine) - 1.0)))


##################################### bundle #####################################


def quadrature_weights(grid: TimeGrid, H: float) -> np.ndarray:
    """w[i, j] with sum_i w[i, j] g(s_i, t_j) f(s_i) ~ int_0^{t_j} g(s, t_j) f(s) ds"""
    n = grid.n_nodes
    if H < 0.5:
        return np.triu(np.full((n, n), grid.dt), k=1)
    w = np.triu(np.full((n, n), grid.dt))
    w[0, :] *= 0.5
    w[np.diag_indices(n)] *= 0.5
    w[:, 0] = 0.0
    return w


def bracket(g_table: np.ndarray, grid: TimeGrid, H: float) -> Tuple[np.ndarray, np.ndarray]:
    """(<M>_{t_j}, d<M>/dt at t_j) from the kernel columns"""
    m = np.sum(quadrature_weights(grid, H) * g_table, axis=0)
    bad = np.flatnonzero(np.diff(m) <= 0.0)
    if bad.size:
        raise InvalidKernelError(
            f"<M> is not increasing at node {int(bad[0]) + 1}; the kernel solve is unreliable"
        )
    m_prime = np.maximum(np.gradient(m, grid.dt), M_PRIME_FLOOR)
    return m, m_prime


def ghat(g_table: np.ndarray, m_prime: np.ndarray, grid: TimeGrid, H: float) -> np.ndarray:
    """g_hat[k, j] = 1 - d/d<M>_s int_0^{t_j} g(r, s) dr at s = s_k"""
    # running[j, k] = int_0^{t_j} g(r, s_k) dr
    if H < 0.5:
        running = np.zeros_like(g_table)
        running[1:] = grid.dt * np.cumsum(g_table[:-1], axis=0)
    else:
        running = cumulative_trapezoid(g_table, dx=grid.dt, axis=0, initial=0.0)
    slope = differentiate(running, grid, m_prime, axis=1)
    return 1.0 - slope.T


@dataclass(frozen=True)
class KernelBundle:
    grid: TimeGrid
    H: HurstParam
    g_full: np.ndarray  # g(s_i, t_j), rows i > j hold the extension
    bracket: np.ndarray  # <M>_{t_j}
    m_prime: np.ndarray
    ghat_table: np.ndarray  # g_hat(s_i, t_j)
    psi_diag: np.ndarray  # psi(t_j, t_j) = 1 / m'(t_j)

    @property
    def g_table(self) -> np.ndarray:
        """g(s_i, t_j) for i <= j, zero below the diagonal"""
        return np.triu(self.g_full)

    @property
    def weights(self) -> MeasureWeights:
        return MeasureWeights.from_bracket(self.bracket)

    @property
    def quadrature(self) -> np.ndarray:
        """w[i, j] g(s_i, t_j): (f @ quadrature)[j] ~ int_0^{t_j} g(s, t_j) f(s) ds"""
        return quadrature_weights(self.grid, self.H.value) * self.g_full

    @property
    def dm(self) -> np.ndarray:
        """Left-point bracket increments <M>_{t_{i+1}} - <M>_{t_i}"""
        return np.diff(self.bracket)

    @property
    def horizon(self) -> float:
        return self.grid.horizon

    def m_prime_at(self, t: float) -> float:
        return float(np.interp(t, self.grid.nodes, self.m_prime))

    def psi_at(self, t: float) -> float:
        return 1.0 / max(self.m_prime_at(t), M_PRIME_FLOOR)

    def cache_key(self) -> str:
        return cache_key(self.H.value, self.grid.horizon, self.grid.n_steps)

    def restrict(self, n_steps: int) -> "KernelBundle":
        """Bundle on the leading sub-grid [0, t_{n_steps}]; g(., t) for t <= t_n
        does not depend on the outer horizon, only the end-point differences change"""
        assert 2 <= n_steps <= self.grid.n_steps, f"cannot restrict to {n_steps} steps"
        grid = self.grid.restrict(n_steps)
        g_full = self.g_full[: n_steps + 1, : n_steps + 1].copy()
        m, m_prime = bracket(g_full, grid, self.H.value)
        return KernelBundle(
            grid=grid,
            H=self.H,
            g_full=g_full,
            bracket=m,
            m_prime=m_prime,
            ghat_table=ghat(g_full, m_prime, grid, self.H.value),
            psi_diag=1.0 / m_prime,
        )


def build_kernel(
    grid: TimeGrid,
    H,
    cache_dir: Optional[str] = None,
    n_workers: Optional[int] = None,
    progress: bool = False,
) -> KernelBundle:
    """Solve (or load from cache) the full KernelBundle for (H, T, n)"""
    hurst = as_hurst(H)
    if cache_dir is not None:
        cached = load_kernel(cache_dir, grid, hurst)
        if cached is not None:
            return cached
    g_full = solve_g(grid, hurst, n_workers=n_workers, progress=progress)
    m, m_prime = bracket(g_full, grid, hurst.value)
    bundle = KernelBundle(
        grid=grid,
        H=hurst,
        g_full=g_full,
        bracket=m,
        m_prime=m_prime,
        ghat_table=ghat(g_full, m_prime, grid, hurst.value),
        psi_diag=1.0 / m_prime,
    )
    log.info(
        f"Kernel H={hurst.value} T={grid.horizon} n={grid.n_steps}: <M>_T={m[-1]:.6g}"
    )
    if cache_dir is not None:
        save_kernel(cache_dir, bundle)
    return bundle


##################################### cache #####################################


def default_cache_dir() -> str:
    return os.environ.get("MFOU_CACHE_DIR", os.path.join(os.path.expanduser("~"), ".cache", "mfou"))


def cache_key(H: float, horizon: float, n_steps: int) -> str:
    payload = f"H={float(H)!r}|T={float(horizon)!r}|n={int(n_steps)}|v={CACHE_FORMAT_VERSION}"
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _cache_path(cache_dir: str, H: float, grid: TimeGrid) -> str:
    return os.path.join(cache_dir, f"kernel_{cache_key(H, grid.horizon, grid.n_steps)}.npz")


def save_kernel(cache_dir: str, bundle: KernelBundle) -> str:
    """Layout: header (JSON string with H, T, n, format_version) plus one array
    per KernelBundle field"""
    os.makedirs(cache_dir, exist_ok=True)
    path = _cache_path(cache_dir, bundle.H.value, bundle.grid)
    header = {
        "H": bundle.H.value,
        "T": bundle.grid.horizon,
        "n": bundle.grid.n_steps,
        "format_version": CACHE_FORMAT_VERSION,
    }
    tmp = path + ".tmp.npz"
    np.savez_compressed(
        tmp,
        header=np.array(json.dumps(header)),
        g_full=bundle.g_full,
        bracket=bundle.bracket,
        m_prime=bundle.m_prime,
        ghat_table=bundle.ghat_table,
        psi_diag=bundle.psi_diag,
    )
    os.replace(tmp, path)
    log.info(f"Saved kernel to {path}")
    return path


def load_kernel(cache_dir: str, grid: TimeGrid, H: HurstParam) -> Optional[KernelBundle]:
    path = _cache_path(cache_dir, H.value, grid)
    if not os.path.exists(path):
        return None
    with np.load(path) as data:
        header = json.loads(str(data["header"]))
        expected = (H.value, grid.horizon, grid.n_steps, CACHE_FORMAT_VERSION)
        found = (header["H"], header["T"], header["n"], header["format_version"])
        if found != expected:
            log.warning(f"Ignoring cache file {path}: header {found} != {expected}")
            return None
        bundle = KernelBundle(
            grid=grid,
            H=H,
            g_full=data["g_full"],
            bracket=data["bracket"],
            m_prime=data["m_prime"],
            ghat_table=data["ghat_table"],
            psi_diag=data["psi_diag"],
        )
    log.info(f"Loaded kernel from {path}")
    return bundle
