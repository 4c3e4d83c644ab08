"""
Numerical substrate shared by the kernel, design and Laplace machinery.

Everything here works on a uniform TimeGrid. Integrals against d<M> use the
trapezoidal rule in measure, ODEs are written as dY/d<M> = F(t, Y) and stepped
in calendar time with the bracket density m'(t) folded into the right-hand side.

"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.linalg

from src.utils.errors import (
    ContractViolation,
    DimensionError,
    IterationLimitError,
    NumericalBlowUpError,
    SolverError,
)

log = logging.getLogger(__name__)

M_PRIME_FLOOR = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    n_steps: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.horizon > 0:
            raise ContractViolation(f"horizon must be positive, got {self.horizon}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ContractViolation(f"n_steps must be an integer >= 2, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "horizon", float(self.horizon))
        nodes = np.arange(self.n_steps + 1) * self.dt
        nodes[-1] = self.horizon
        nodes.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    def index_of(self, t: float) -> int:
        """Nearest node index for time t"""
        return int(np.clip(round(t / self.dt), 0, self.n_steps))

    def restrict(self, n_steps: int) -> "TimeGrid":
        """Leading sub-grid [0, t_{n_steps}] with the same spacing"""
        return TimeGrid(n_steps * self.dt, n_steps)


@dataclass(frozen=True)
class MeasureWeights:
    """Trapezoid weights approximating d<M> increments at each node"""

    weights: np.ndarray

    @classmethod
    def from_bracket(cls, m: np.ndarray) -> "MeasureWeights":
        m = np.asarray(m, dtype=float)
        dm = np.diff(m)
        w = np.zeros_like(m)
        w[:-1] += 0.5 * dm
        w[1:] += 0.5 * dm
        if np.any(w < 0):
            raise ContractViolation("bracket must be nondecreasing for measure weights")
        return cls(w)

    @classmethod
    def lebesgue(cls, grid: TimeGrid) -> "MeasureWeights":
        return cls.from_bracket(grid.nodes)

    @property
    def total(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self):
        return len(self.weights)


def integrate(values: np.ndarray, weights: MeasureWeights) -> float:
    """Trapezoidal-in-measure approximation of int_0^T f(t) d<M>_t"""
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != len(weights):
        raise DimensionError(
            f"integrand has {values.shape[-1]} nodes but weights have {len(weights)}"
        )
    return values @ weights.weights


def differentiate(
    values: np.ndarray,
    grid: TimeGrid,
    m_prime: Optional[np.ndarray] = None,
    axis: int = -1,
) -> np.ndarray:
    """d/dt (or d/d<M>_t when m_prime is given) by centered differences,
    one-sided at both ends"""
    values = np.asarray(values, dtype=float)
    if values.shape[axis] != grid.n_nodes:
        raise DimensionError(
            f"values have {values.shape[axis]} nodes along axis {axis}, grid has {grid.n_nodes}"
        )
    deriv = np.gradient(values, grid.dt, axis=axis)
    if m_prime is None:
        return deriv
    shape = [1] * values.ndim
    shape[axis] = -1
    return deriv / np.maximum(np.asarray(m_prime), M_PRIME_FLOOR).reshape(shape)


@dataclass(frozen=True)
class OdeTrajectory:
    grid: TimeGrid
    values: np.ndarray  # [n_nodes, *state_shape]
    label: str = ""

    def __getitem__(self, idx):
        return self.values[idx]

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


def node_interpolant(grid: TimeGrid, node_values: np.ndarray) -> Callable[[float], float]:
    """Piecewise-linear function of t through the node values"""
    nodes = grid.nodes

    def at(t: float) -> float:
        return float(np.interp(t, nodes, node_values))

    return at


def ode_step(
    state: np.ndarray,
    rhs: Callable[[float, np.ndarray], np.ndarray],
    grid: TimeGrid,
    m_prime: np.ndarray,
    label: str = "",
) -> OdeTrajectory:
    """Classical fourth-order Runge-Kutta for dY/dt = m'(t) * rhs(t, Y).

    rhs returns the derivative with respect to <M>; m'(t) at half steps is the
    linear interpolation of the node values.
    """
    m_prime = np.asarray(m_prime, dtype=float)
    if m_prime.shape != (grid.n_nodes,):
        raise DimensionError(f"m_prime has shape {m_prime.shape}, expected ({grid.n_nodes},)")
    if np.any(m_prime < 0):
        raise ContractViolation("m_prime must be nonnegative")
    y = np.array(state, dtype=float)
    out = np.empty((grid.n_nodes, *y.shape))
    out[0] = y
    h = grid.dt
    nodes = grid.nodes
    for i in range(grid.n_steps):
        t = nodes[i]
        mp0 = m_prime[i]
        mp1 = m_prime[i + 1]
        mph = 0.5 * (mp0 + mp1)
        k1 = mp0 * rhs(t, y)
        k2 = mph * rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = mph * rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = mp1 * rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise NumericalBlowUpError(f"non-finite ODE state in '{label or 'ode'}'", node=i + 1)
        out[i + 1] = y
    return OdeTrajectory(grid, out, label)


def ode_step_linear(
    state: np.ndarray,
    rhs: Callable[[float], np.ndarray],
    grid: TimeGrid,
    m_prime: np.ndarray,
    forcing: Optional[Callable[[float], np.ndarray]] = None,
    label: str = "",
) -> OdeTrajectory:
    """Linear system dY/d<M> = C(t) Y (+ f(t)) with coefficient C = rhs(t)"""
    if forcing is None:

        def _rhs(t, y):
            return rhs(t) @ y

    else:

        def _rhs(t, y):
            return rhs(t) @ y + forcing(t)

    return ode_step(state, _rhs, grid, m_prime, label=label)


def time_changed(
    coefficient: Callable[[float], np.ndarray],
    grid: TimeGrid,
    m_prime: np.ndarray,
) -> Callable[[float], np.ndarray]:
    """t -> m'(t) C(t), with m' linearly interpolated between nodes"""
    nodes = grid.nodes
    m_prime = np.asarray(m_prime, dtype=float)

    def at(t: float) -> np.ndarray:
        return float(np.interp(t, nodes, m_prime)) * coefficient(t)

    return at


def rk4_matrix(generator: Callable[[float], np.ndarray], t0: float, h: float) -> np.ndarray:
    """RK4 transition matrix over [t0, t0 + h] for dY/dt = G(t) Y"""
    a1 = generator(t0)
    ah = generator(t0 + 0.5 * h)
    a2 = generator(t0 + h)
    eye = np.eye(a1.shape[0])
    k1 = a1
    k2 = ah @ (eye + 0.5 * h * k1)
    k3 = ah @ (eye + 0.5 * h * k2)
    k4 = a2 @ (eye + h * k3)
    return eye + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_propagators(
    coefficient: Callable[[float], np.ndarray],
    grid: TimeGrid,
    m_prime: np.ndarray,
    fraction: float = 1.0,
) -> np.ndarray:
    """One-step transition matrices S_i of the RK4 map for dY/d<M> = C(t) Y.

    Because RK4 is linear in Y for a linear system, stepping any solution gives
    Y_{i+1} = S_i Y_i exactly, so products of S_i are discrete propagators.
    With fraction < 1 the step covers [t_{i+1} - fraction*dt, t_{i+1}] instead.
    """
    assert 0.0 < fraction <= 1.0, "fraction must lie in (0, 1]"
    generator = time_changed(coefficient, grid, m_prime)
    h = fraction * grid.dt
    nodes = grid.nodes
    dim = coefficient(0.0).shape[0]
    out = np.empty((grid.n_steps, dim, dim))
    for i in range(grid.n_steps):
        out[i] = rk4_matrix(generator, nodes[i + 1] - h, h)
    if not np.all(np.isfinite(out)):
        bad = int(np.argmax(~np.all(np.isfinite(out), axis=(1, 2))))
        raise NumericalBlowUpError("non-finite propagator", node=bad + 1)
    return out


def solve_dense(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Dense LU solve; reports a condition estimate when the system is singular"""
    try:
        sol = scipy.linalg.solve(matrix, rhs, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"dense solve failed: {exc}", condition=_safe_cond(matrix)) from exc
    if not np.all(np.isfinite(sol)):
        raise SolverError("dense solve produced non-finite values", condition=_safe_cond(matrix))
    return sol


def _safe_cond(matrix: np.ndarray) -> float:
    try:
        return float(np.linalg.cond(matrix))
    except np.linalg.LinAlgError:
        return float("inf")


def top_eigenvalue(
    matrix: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    seed: int = 0,
) -> Tuple[float, np.ndarray]:
    """Largest eigenpair of a symmetric PSD matrix by power iteration.

    Stops once the Rayleigh quotient changes by less than tol relative and the
    eigen-residual ||Av - lambda v|| is at the same relative level.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractViolation(f"expected a square matrix, got shape {a.shape}")
    scale = max(np.max(np.abs(a)), np.finfo(float).tiny)
    if np.max(np.abs(a - a.T)) > 1e-10 * scale:
        raise ContractViolation("top_eigenvalue requires a symmetric matrix")

    rng = np.random.default_rng(seed)
    x = np.ones(a.shape[0]) + 0.01 * rng.standard_normal(a.shape[0])
    x /= np.linalg.norm(x)
    lam = float(x @ a @ x)
    for _ in range(max_iter):
        y = a @ x
        y_norm = np.linalg.norm(y)
        if y_norm == 0.0:
            return 0.0, x
        x_new = y / y_norm
        ax = a @ x_new
        lam_new = float(x_new @ ax)
        residual = np.linalg.norm(ax - lam_new * x_new)
        converged = abs(lam_new - lam) < tol * abs(lam) and residual <= tol * max(
            1.0, abs(lam_new)
        )
        x, lam = x_new, lam_new
        if converged:
            return lam, x
    raise IterationLimitError(f"power iteration did not converge in {max_iter} iterations")
