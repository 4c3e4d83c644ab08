"""
Laplace transforms of the quadratic functional int Q^2 d<M>.

For lam >= 0 and Gaussian zeta (see design),

    E exp(-lam int zeta* R zeta d<M>) = exp(-lam int [tr(G R) + Z* R Z] d<M>)

where G solves the filter Riccati equation

    dG/d<M> = cA G + G cA* + b b* - 2 lam G R G,    G(0) = 0,   cA = -(theta/2) A

and Z is the filtered mean, the solution of the Volterra equation

    Z(t) = P(t) - 2 lam int_0^t phi(t) phi^{-1}(s) G(s) R(s) Z(s) d<M>_s.

Two parameterizations are used side by side: the scaled one (mu, lam = mu/T),
whose limit is exp(-mu I(theta)), and the unscaled one (a or mu with lam = mu)
whose log, divided by T, has a finite rate. The linearized system for G,

    dPsi1/d<M> = -cA* Psi1 + (a/2) l l* Psi2,    dPsi2/d<M> = cA Psi2 + b b* Psi1,

gives E exp(-a int Q^2 d<M>) = exp(-1/2 int tr cA d<M>) det Psi1(T)^{-1/2} at v = 0.

"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.stats

from src.inference.design import (
    OperatorTable,
    asymptotic_fisher,
    build_operator,
    drift_matrix,
    matrix_r,
    propagators,
    solve_p,
    vector_b,
    vector_l,
)
from src.model.kernel import KernelBundle
from src.model.process import InputSignal
from src.utils.errors import ContractViolation, DomainError, SolvabilityError
from src.utils.numerics import OdeTrajectory, integrate, ode_step

log = logging.getLogger(__name__)

PSD_TOL = 1e-8


@dataclass(frozen=True)
class LaplaceResult:
    """exp(-lam (trace_part + mean_part)); the parts are the two d<M> integrals"""

    lam: float
    horizon: float
    trace_part: float
    mean_part: float

    @property
    def log_value(self) -> float:
        return -self.lam * (self.trace_part + self.mean_part)

    @property
    def value(self) -> float:
        return math.exp(self.log_value)

    @property
    def rate(self) -> float:
        """-(1/T) log value"""
        return -self.log_value / self.horizon

    def __float__(self):
        return self.value


def _riccati(lam: float, theta: float, kernel: KernelBundle) -> OdeTrajectory:
    drift = drift_matrix(theta, kernel)

    def rhs(t, gamma):
        psi = kernel.psi_at(t)
        a = drift(t)
        b = vector_b(psi)
        return a @ gamma + gamma @ a.T + np.outer(b, b) - 2.0 * lam * gamma @ matrix_r(psi) @ gamma

    traj = ode_step(np.zeros((2, 2)), rhs, kernel.grid, kernel.m_prime, label="gamma")
    gamma = traj.values
    scale = np.maximum(np.abs(gamma).max(axis=(1, 2)), 1.0)
    asym = np.abs(gamma - gamma.transpose(0, 2, 1)).max(axis=(1, 2))
    low = np.linalg.eigvalsh(0.5 * (gamma + gamma.transpose(0, 2, 1)))[:, 0]
    bad = np.flatnonzero((asym > PSD_TOL * scale) | (low < -PSD_TOL * scale))
    if bad.size:
        raise ContractViolation(f"Riccati solution lost symmetry/PSD at node {int(bad[0])}")
    return traj


def _filtered_mean(
    lam: float,
    theta: float,
    signal: InputSignal,
    gamma: np.ndarray,
    kernel: KernelBundle,
) -> np.ndarray:
    """Forward substitution on the trapezoid-discretized Volterra equation"""
    grid = kernel.grid
    p = solve_p(signal, theta, kernel).values
    if lam == 0.0:
        return p
    props = propagators(theta, kernel)
    dm = kernel.dm
    psi = kernel.psi_diag
    out = np.zeros((grid.n_nodes, 2))
    out[0] = p[0]
    # acc = trapezoid on [0, t_j] of phi(t_j) phi^{-1}(s) G R Z d<M>_s
    acc = np.zeros(2)
    forcing_prev = gamma[0] @ matrix_r(psi[0]) @ out[0]
    for j in range(1, grid.n_nodes):
        gr = gamma[j] @ matrix_r(psi[j])
        half = 0.5 * dm[j - 1]
        carried = props[j - 1] @ (acc + half * forcing_prev)
        system = np.eye(2) + 2.0 * lam * half * gr
        out[j] = np.linalg.solve(system, p[j] - 2.0 * lam * carried)
        forcing_prev = gr @ out[j]
        acc = carried + half * forcing_prev
    return out


def _laplace(lam: float, theta: float, signal: InputSignal, kernel: KernelBundle) -> LaplaceResult:
    if lam < 0:
        raise DomainError(f"mu must be nonnegative, got {lam}")
    if theta <= 0:
        raise DomainError(f"theta must be positive, got {theta}")
    if lam == 0.0:
        return LaplaceResult(0.0, kernel.horizon, 0.0, 0.0)
    gamma = _riccati(lam, theta, kernel).values
    zf = _filtered_mean(lam, theta, signal, gamma, kernel)
    ell = np.stack([kernel.psi_diag, np.ones_like(kernel.psi_diag)], axis=-1)
    trace = 0.25 * np.einsum("ni,nij,nj->n", ell, gamma, ell)
    mean = 0.25 * np.einsum("ni,ni->n", ell, zf) ** 2
    return LaplaceResult(
        lam=lam,
        horizon=kernel.horizon,
        trace_part=integrate(trace, kernel.weights),
        mean_part=integrate(mean, kernel.weights),
    )


def gamma_z_laplace(mu: float, theta: float, signal: InputSignal, kernel: KernelBundle) -> LaplaceResult:
    """E exp(-(mu/T) int Q^2 d<M>); tends to exp(-mu I(theta)) under v_opt"""
    return _laplace(mu / kernel.horizon, theta, signal, kernel)


def laplace_rate(mu: float, theta: float, signal: InputSignal, kernel: KernelBundle) -> float:
    """-(1/T) log E exp(-mu int Q^2 d<M>)"""
    return _laplace(mu, theta, signal, kernel).rate


def constant_drift_laplace(
    mu: float,
    theta: float,
    alpha: float,
    kernel: KernelBundle,
) -> LaplaceResult:
    """gamma_z_laplace with the mean of zeta driven by alpha b(t)"""
    return gamma_z_laplace(mu, theta, InputSignal.constant(alpha, kernel), kernel)


def constant_drift_target(mu: float, theta: float, alpha: float, H) -> float:
    """Long-horizon limit of constant_drift_laplace"""
    if float(H) > 0.5:
        return math.exp(-mu / (2.0 * theta))
    return math.exp(-mu * (1.0 / (2.0 * theta) + (alpha / theta) ** 2))


def optimal_input_target(mu: float, theta: float) -> float:
    """exp(-mu I(theta))"""
    return math.exp(-mu * asymptotic_fisher(theta))


##################################### Psi system #####################################


@dataclass(frozen=True)
class PsiSystemState:
    a: float
    psi1: np.ndarray  # [n+1, 2, 2]
    psi2: np.ndarray
    trace_integral: float  # int tr cA d<M>

    @property
    def log_det_psi1(self) -> np.ndarray:
        return np.log(np.linalg.det(self.psi1))

    @property
    def log_value(self) -> float:
        return -0.5 * self.trace_integral - 0.5 * float(self.log_det_psi1[-1])

    @property
    def value(self) -> float:
        return math.exp(self.log_value)


def solve_psi_system(a: float, theta: float, kernel: KernelBundle) -> PsiSystemState:
    if theta <= 0:
        raise DomainError(f"theta must be positive, got {theta}")
    if a <= -(theta**2) / 2.0:
        raise DomainError(f"a must exceed -theta^2/2 = {-(theta**2) / 2.0}, got {a}")
    drift = drift_matrix(theta, kernel)

    def rhs(t, state):
        psi = kernel.psi_at(t)
        cal_a = drift(t)
        b = vector_b(psi)
        ell = vector_l(psi)
        psi1, psi2 = state[0], state[1]
        d1 = -cal_a.T @ psi1 + 0.5 * a * np.outer(ell, ell) @ psi2
        d2 = cal_a @ psi2 + np.outer(b, b) @ psi1
        return np.stack([d1, d2])

    init = np.stack([np.eye(2), np.zeros((2, 2))])
    traj = ode_step(init, rhs, kernel.grid, kernel.m_prime, label="psi")
    psi1 = traj.values[:, 0]
    det = np.linalg.det(psi1)
    bad = np.flatnonzero(det <= 0.0)
    if bad.size:
        raise SolvabilityError(f"det Psi1 <= 0 for a={a}; a is too negative", node=int(bad[0]))

    # int tr cA d<M> = -theta int psi d<M>, which is -theta T up to quadrature
    trace_integral = -theta * integrate(kernel.psi_diag, kernel.weights)
    if abs(trace_integral + theta * kernel.horizon) > 5e-3 * theta * kernel.horizon:
        log.warning(
            f"int tr A d<M> = {trace_integral:.6g} deviates from -theta T = {-theta * kernel.horizon:.6g}"
        )
    return PsiSystemState(a, psi1, traj.values[:, 1], trace_integral)


def psi_laplace(a: float, theta: float, kernel: KernelBundle) -> float:
    """L_T(a) = E exp(-a int Q^2 d<M>) at v = 0"""
    return solve_psi_system(a, theta, kernel).value


def eigen_laplace(a: float, theta: float, kernel: KernelBundle, table: Optional[OperatorTable] = None) -> float:
    """prod_i (1 + 2 a nu_i(T))^{-1/2} over the eigenvalues of K_T"""
    table = table or build_operator(theta, kernel)
    nu = np.clip(table.eigenvalues(), 0.0, None)
    factors = 1.0 + 2.0 * a * nu
    if np.any(factors <= 0):
        raise DomainError(f"1 + 2 a nu_1 <= 0 for a={a}")
    return math.exp(-0.5 * float(np.sum(np.log(factors))))


def growth_rate(state: PsiSystemState, kernel: KernelBundle, t_from: float, t_to: float):
    """Least-squares slope of log det Psi1 over [t_from, t_to] and its R^2"""
    nodes = kernel.grid.nodes
    mask = (nodes >= t_from) & (nodes <= t_to)
    if mask.sum() < 3:
        raise ContractViolation(f"fewer than 3 nodes in [{t_from}, {t_to}]")
    fit = scipy.stats.linregress(nodes[mask], state.log_det_psi1[mask])
    return float(fit.slope), float(fit.rvalue**2)


##################################### closed forms #####################################


def kat_limit(mu: float, theta: float) -> float:
    """mu/theta^2 + theta/2 - sqrt(theta^2/4 + mu/2)"""
    if mu <= -(theta**2) / 2.0:
        raise DomainError(f"mu must exceed -theta^2/2 = {-(theta**2) / 2.0}, got {mu}")
    return mu / theta**2 + theta / 2.0 - math.sqrt(theta**2 / 4.0 + mu / 2.0)


def exact_rate_limit(mu: float, theta: float) -> float:
    """lim -(1/T) log E exp(-mu int Q^2 d<M>) under v_opt:
    sqrt(theta^2/4 + mu/2) - theta/2 + mu/(theta^2 + 2 mu)"""
    if mu <= -(theta**2) / 2.0:
        raise DomainError(f"mu must exceed -theta^2/2 = {-(theta**2) / 2.0}, got {mu}")
    return math.sqrt(theta**2 / 4.0 + mu / 2.0) - theta / 2.0 + mu / (theta**2 + 2.0 * mu)


def zero_input_rate_limit(a: float, theta: float) -> float:
    """sqrt(theta^2/4 + a/2) - theta/2, the v = 0 rate"""
    return math.sqrt(theta**2 / 4.0 + a / 2.0) - theta / 2.0


@dataclass(frozen=True)
class MonteCarloLaplace:
    mean: float
    std_error: float
    n_paths: int


def mc_laplace(mu: float, q_paths: np.ndarray, kernel: KernelBundle) -> MonteCarloLaplace:
    """Sample mean of exp(-(mu/T) int Q^2 d<M>) over paths [n_paths, n+1]"""
    q_paths = np.atleast_2d(q_paths)
    functional = integrate(q_paths**2, kernel.weights)
    samples = np.exp(-(mu / kernel.horizon) * functional)
    n = len(samples)
    assert n >= 2, "need at least two paths"
    return MonteCarloLaplace(
        mean=float(np.mean(samples)),
        std_error=float(np.std(samples, ddof=1) / math.sqrt(n)),
        n_paths=n,
    )
