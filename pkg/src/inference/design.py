"""
Optimal input and Fisher-information machinery.

The two-dimensional state zeta_t = (Z_t, int_0^t psi(s, s) dZ_s) obeys

    d zeta = -(theta/2) A(t) zeta d<M> + b(t) (v d<M> + dM),   Q = (1/2) l(t)* zeta

with psi = psi(t, t) = 1/m'(t) and

    A = [[psi, 1], [psi^2, psi]],  b = (1, psi),  l = (psi, 1),  R = l l* / 4.

In calendar time m'A = [[1, m'], [psi, 1]] has eigenvalues 0 and 2, so phi has one
mode decaying like exp(-theta t) and one constant mode invisible to l. Products
phi(t) phi^{-1}(s) are never formed from phi^{-1}; they are built from the RK4
one-step propagators, which stay bounded for s <= t.

"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from src.model.kernel import KernelBundle
from src.model.process import InputSignal
from src.utils.errors import ContractViolation, DimensionError, DomainError, NumericalBlowUpError
from src.utils.monitor import log_execution_time
from src.utils.numerics import (
    MeasureWeights,
    OdeTrajectory,
    TimeGrid,
    differentiate,
    integrate,
    node_interpolant,
    ode_step,
    ode_step_linear,
    rk4_propagators,
    top_eigenvalue,
)

log = logging.getLogger(__name__)

DET_UNDERFLOW = 1e-300
OPERATOR_SYMMETRY_TOL = 1e-8


def matrix_a(psi: float) -> np.ndarray:
    return np.array([[psi, 1.0], [psi * psi, psi]])


def vector_b(psi: float) -> np.ndarray:
    return np.array([1.0, psi])


def vector_l(psi: float) -> np.ndarray:
    return np.array([psi, 1.0])


def matrix_r(psi: float) -> np.ndarray:
    ell = vector_l(psi)
    return 0.25 * np.outer(ell, ell)


def drift_matrix(theta: float, kernel: KernelBundle):
    """t -> -(theta/2) A(t)"""

    def at(t: float) -> np.ndarray:
        return -0.5 * theta * matrix_a(kernel.psi_at(t))

    return at


def _check_theta(theta: float, strict: bool = True):
    if theta < 0 or (strict and theta == 0):
        raise DomainError(f"theta must be {'positive' if strict else 'nonnegative'}, got {theta}")


##################################### inputs #####################################


def optimal_u(kernel: KernelBundle, v: InputSignal) -> InputSignal:
    """u(t_j) = d/dt sum_{i<j} g_hat(s_i, t_j) v(s_i) (m_{i+1} - m_i)"""
    if v.v.shape != (kernel.grid.n_nodes,):
        raise DimensionError(f"v has shape {v.v.shape}, grid has {kernel.grid.n_nodes} nodes")
    running = (v.v[:-1] * kernel.dm) @ np.triu(kernel.ghat_table, k=1)[:-1]
    u = differentiate(running, kernel.grid)
    return InputSignal(v.kind, u, v.v.copy(), alpha=v.alpha)


def optimal_v(kernel: KernelBundle) -> InputSignal:
    """v_opt = sqrt(psi(t, t)), saturating (1/T) int v^2 d<M> = 1"""
    v = np.sqrt(kernel.psi_diag)
    signal = optimal_u(kernel, InputSignal("optimal", np.zeros_like(v), v))
    energy = signal.energy(kernel)
    if abs(energy - 1.0) > 5e-3:
        log.warning(f"Optimal input energy {energy:.5f} deviates from 1 by more than 0.5%")
    return signal


##################################### trajectories #####################################


@dataclass(frozen=True)
class PhiTrajectory:
    grid: TimeGrid
    phi: np.ndarray  # [n+1, 2, 2]
    phi_inv: np.ndarray
    propagators: np.ndarray  # S_j: phi(t_{j+1}) = S_j phi(t_j)
    theta: float

    @property
    def det(self) -> np.ndarray:
        return np.linalg.det(self.phi)

    def transition(self, j: int, i: int) -> np.ndarray:
        """phi(t_j) phi^{-1}(t_i) for i <= j as a propagator product"""
        assert i <= j, "transition is formed forward in time only"
        out = np.eye(2)
        for k in range(i, j):
            out = self.propagators[k] @ out
        return out


def propagators(theta: float, kernel: KernelBundle) -> np.ndarray:
    """One-step maps S_j with phi(t_{j+1}) = S_j phi(t_j)"""
    _check_theta(theta, strict=False)
    return rk4_propagators(drift_matrix(theta, kernel), kernel.grid, kernel.m_prime)


def solve_phi(theta: float, kernel: KernelBundle) -> PhiTrajectory:
    """d phi/d<M> = -(theta/2) A(t) phi, phi(0) = Id"""
    grid = kernel.grid
    props = propagators(theta, kernel)
    phi = np.empty((grid.n_nodes, 2, 2))
    phi[0] = np.eye(2)
    for j in range(grid.n_steps):
        phi[j + 1] = props[j] @ phi[j]
    det = np.linalg.det(phi)
    small = np.flatnonzero(det < DET_UNDERFLOW)
    if small.size:
        raise NumericalBlowUpError(
            "det phi underflows; work with propagators (PhiTrajectory.transition) instead",
            node=int(small[0]),
        )
    # explicit 2x2 inverse
    phi_inv = np.empty_like(phi)
    phi_inv[:, 0, 0] = phi[:, 1, 1]
    phi_inv[:, 1, 1] = phi[:, 0, 0]
    phi_inv[:, 0, 1] = -phi[:, 0, 1]
    phi_inv[:, 1, 0] = -phi[:, 1, 0]
    phi_inv /= det[:, None, None]
    return PhiTrajectory(grid, phi, phi_inv, props, float(theta))


def solve_p(signal: InputSignal, theta: float, kernel: KernelBundle) -> OdeTrajectory:
    """Mean path P = E zeta: dP/d<M> = -(theta/2) A(t) P + b(t) v(t), P(0) = 0"""
    _check_theta(theta)
    v_at = node_interpolant(kernel.grid, signal.v)

    def forcing(t):
        return vector_b(kernel.psi_at(t)) * v_at(t)

    return ode_step_linear(
        np.zeros(2),
        drift_matrix(theta, kernel),
        kernel.grid,
        kernel.m_prime,
        forcing=forcing,
        label="P",
    )


def variation_of_constants(signal: InputSignal, theta: float, kernel: KernelBundle) -> np.ndarray:
    """P(t) = phi(t) int_0^t phi^{-1}(s) b(s) v(s) d<M>_s, Simpson on each cell.

    The forcing is m'(s) b(s) v(s) = (m'(s), 1) v(s) in calendar time.
    """
    _check_theta(theta)
    grid = kernel.grid
    coef = drift_matrix(theta, kernel)
    full = rk4_propagators(coef, grid, kernel.m_prime)
    half = rk4_propagators(coef, grid, kernel.m_prime, fraction=0.5)
    mp_at = node_interpolant(grid, kernel.m_prime)
    v_at = node_interpolant(grid, signal.v)

    def forcing(t):
        return np.array([mp_at(t), 1.0]) * v_at(t)

    h = grid.dt
    nodes = grid.nodes
    out = np.zeros((grid.n_nodes, 2))
    f_left = forcing(nodes[0])
    for j in range(grid.n_steps):
        f_mid = forcing(nodes[j] + 0.5 * h)
        f_right = forcing(nodes[j + 1])
        cell = full[j] @ f_left + 4.0 * (half[j] @ f_mid) + f_right
        out[j + 1] = full[j] @ out[j] + (h / 6.0) * cell
        f_left = f_right
    return out


def lyapunov_gamma(theta: float, kernel: KernelBundle) -> OdeTrajectory:
    """Covariance of zeta: dG/d<M> = -(theta/2)(A G + G A*) + b b*, G(0) = 0"""
    _check_theta(theta)
    drift = drift_matrix(theta, kernel)

    def rhs(t, gamma):
        a = drift(t)
        b = vector_b(kernel.psi_at(t))
        return a @ gamma + gamma @ a.T + np.outer(b, b)

    return ode_step(np.zeros((2, 2)), rhs, kernel.grid, kernel.m_prime, label="gamma_bar")


##################################### Fisher information #####################################


def _quadratic_l(values: np.ndarray, kernel: KernelBundle) -> np.ndarray:
    """l(t_j)* X_j l(t_j) per node for matrices, (l(t_j)* x_j)^2 for vectors"""
    ell = np.stack([kernel.psi_diag, np.ones_like(kernel.psi_diag)], axis=-1)
    if values.ndim == 3:
        return np.einsum("ni,nij,nj->n", ell, values, ell)
    return np.einsum("ni,ni->n", ell, values) ** 2


def fisher_i1(theta: float, kernel: KernelBundle) -> float:
    """I_1 = int tr(G_bar R) d<M> = (1/4) int l* G_bar l d<M>"""
    gamma = lyapunov_gamma(theta, kernel).values
    return 0.25 * integrate(_quadratic_l(gamma, kernel), kernel.weights)


def fisher_i2(signal: InputSignal, theta: float, kernel: KernelBundle) -> float:
    """I_2 = (1/4) int (l* P)^2 d<M>"""
    if not np.any(signal.v):
        return 0.0
    p = solve_p(signal, theta, kernel).values
    return 0.25 * integrate(_quadratic_l(p, kernel), kernel.weights)


def asymptotic_fisher(theta: float) -> float:
    """1/(2 theta) + 1/theta^2"""
    _check_theta(theta)
    return 1.0 / (2.0 * theta) + 1.0 / theta**2


@dataclass(frozen=True)
class FisherReport:
    theta: float
    horizon: float
    i1: float
    i2: float
    asymptotic: float

    @property
    def total(self) -> float:
        return self.i1 + self.i2

    @property
    def rate(self) -> float:
        """(I_1 + I_2) / T"""
        return self.total / self.horizon


def fisher_information(signal: InputSignal, theta: float, kernel: KernelBundle) -> FisherReport:
    return FisherReport(
        theta=float(theta),
        horizon=kernel.horizon,
        i1=fisher_i1(theta, kernel),
        i2=fisher_i2(signal, theta, kernel),
        asymptotic=asymptotic_fisher(theta),
    )


##################################### operator K_T #####################################


def green_matrix(theta: float, kernel: KernelBundle, props: Optional[np.ndarray] = None) -> np.ndarray:
    """G[j, i] = (1/2) psi_j^{-1/2} l_j* phi(t_j) phi^{-1}(s_i) b_i psi_i^{-1/2}, i <= j"""
    if props is None:
        props = propagators(theta, kernel)
    n_nodes = kernel.grid.n_nodes
    psi = kernel.psi_diag
    root = np.sqrt(psi)
    green = np.zeros((n_nodes, n_nodes))
    # carried[i] = phi(t_j) phi^{-1}(s_i) b_i psi_i^{-1/2}
    carried = np.zeros((n_nodes, 2))
    for j in range(n_nodes):
        carried[j] = np.array([1.0 / root[j], root[j]])
        green[j, : j + 1] = (0.5 / root[j]) * (carried[: j + 1] @ vector_l(psi[j]))
        if j < n_nodes - 1:
            carried[: j + 1] = carried[: j + 1] @ props[j].T
    return green


@dataclass(frozen=True)
class OperatorTable:
    """Symmetric discretization of K_T on L^2([0, T], ds) with trapezoid weights folded in"""

    grid: TimeGrid
    matrix: np.ndarray
    sigma_weights: np.ndarray

    def eigenvalues(self) -> np.ndarray:
        """All eigenvalues, descending"""
        return scipy.linalg.eigvalsh(self.matrix)[::-1]

    def top(self):
        return top_eigenvalue(self.matrix)

    def quadratic_form(self, f: np.ndarray) -> float:
        """<f, K_T f> for f given at the nodes"""
        x = np.sqrt(self.sigma_weights) * np.asarray(f, dtype=float)
        return float(x @ self.matrix @ x)


def _inner_weights(grid: TimeGrid) -> np.ndarray:
    """Row j holds the trapezoid weights of int_0^{t_j} ds"""
    n_nodes = grid.n_nodes
    inner = np.tril(np.full((n_nodes, n_nodes), grid.dt))
    inner[:, 0] *= 0.5
    inner[np.diag_indices(n_nodes)] *= 0.5
    inner[0, 0] = 0.0
    return inner


@log_execution_time(log)
def build_operator(theta: float, kernel: KernelBundle) -> OperatorTable:
    """K_T(s, sigma) = int_{max(s, sigma)}^T G(t, s) G(t, sigma) dt, assembled as C* C with
    C[j, i] = sqrt(w_j) G(t_j, s_i) a_ji / sqrt(w_i) (outer weights w, inner weights a)"""
    _check_theta(theta)
    weights = MeasureWeights.lebesgue(kernel.grid).weights
    root_w = np.sqrt(weights)
    factor = root_w[:, None] * green_matrix(theta, kernel) * _inner_weights(kernel.grid) / root_w[None, :]
    matrix = factor.T @ factor
    scale = max(float(np.max(np.abs(matrix))), np.finfo(float).tiny)
    asym = float(np.max(np.abs(matrix - matrix.T)))
    if asym > OPERATOR_SYMMETRY_TOL * scale:
        raise ContractViolation(f"operator assembly is not symmetric (max asymmetry {asym:.3e})")
    matrix = 0.5 * (matrix + matrix.T)
    return OperatorTable(kernel.grid, matrix, weights)


def fisher_i2_operator(
    signal: InputSignal,
    theta: float,
    kernel: KernelBundle,
    table: Optional[OperatorTable] = None,
) -> float:
    """I_2 as the double integral <f, K_T f> with f = v / sqrt(psi)"""
    table = table or build_operator(theta, kernel)
    return table.quadratic_form(signal.v / np.sqrt(kernel.psi_diag))


@dataclass(frozen=True)
class J2Result:
    value: float
    nu1: float
    signal: InputSignal


def j2_supremum(
    theta: float,
    kernel: KernelBundle,
    table: Optional[OperatorTable] = None,
) -> J2Result:
    """sup of I_2 over (1/T) int v^2 d<M> <= 1, equal to T nu_1(T), and its maximizer"""
    table = table or build_operator(theta, kernel)
    nu1, vec = table.top()
    horizon = kernel.horizon
    f = np.sqrt(horizon) * vec / np.sqrt(table.sigma_weights)
    if np.sum(f) < 0:
        f = -f
    v = f * np.sqrt(kernel.psi_diag)
    signal = optimal_u(kernel, InputSignal("tabulated", np.zeros_like(v), v))
    return J2Result(value=horizon * nu1, nu1=nu1, signal=signal)


def input_signal(spec: str, kernel: KernelBundle, alpha: float = 0.0) -> InputSignal:
    """Resolve an input spec: zero | constant | optimal | file:PATH"""
    if spec == "zero":
        return InputSignal.zero(kernel.grid)
    if spec == "constant":
        return InputSignal.constant(alpha, kernel)
    if spec == "optimal":
        return optimal_v(kernel)
    if spec.startswith("file:"):
        return InputSignal.from_csv(spec[len("file:") :], kernel)
    raise DomainError(f"unknown input {spec!r}, expected zero|constant|optimal|file:PATH")
