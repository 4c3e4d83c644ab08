"""
Maximum-likelihood estimation of theta from (Z, Q).

    theta_hat = (int v Q d<M> - int Q dZ) / int Q^2 d<M>

with left-point sums. The same routine covers zero, constant, optimal and
tabulated inputs; the constant case uses the transformed v, not alpha itself.

"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from src.inference.design import asymptotic_fisher, fisher_information
from src.model.kernel import KernelBundle
from src.model.mfbm import as_hurst
from src.model.process import InputSignal
from src.utils.errors import DegeneratePathError, DimensionError, DomainError

log = logging.getLogger(__name__)

DENOMINATOR_EPS = 1e-12
REGIMES = ("constant", "optimal")


@dataclass(frozen=True)
class EstimationResult:
    theta_hat: float
    numerator: float
    denominator: float
    horizon: float
    input_kind: str


def mle_terms(
    z: np.ndarray,
    q: np.ndarray,
    v: np.ndarray,
    kernel: KernelBundle,
) -> Tuple[np.ndarray, np.ndarray]:
    """(numerator, denominator) of the MLE ratio; paths along the last axis"""
    z = np.asarray(z, dtype=float)
    q = np.asarray(q, dtype=float)
    if z.shape != q.shape or z.shape[-1] != kernel.grid.n_nodes:
        raise DimensionError(f"Z {z.shape} and Q {q.shape} must share the grid ({kernel.grid.n_nodes} nodes)")
    q_left = q[..., :-1]
    dm = kernel.dm
    numerator = np.sum(v[:-1] * q_left * dm, axis=-1) - np.sum(q_left * np.diff(z, axis=-1), axis=-1)
    denominator = np.sum(q_left**2 * dm, axis=-1)
    return numerator, denominator


def mle(z: np.ndarray, q: np.ndarray, signal: InputSignal, kernel: KernelBundle) -> EstimationResult:
    numerator, denominator = mle_terms(z, q, signal.v, kernel)
    numerator, denominator = float(numerator), float(denominator)
    if not denominator > DENOMINATOR_EPS:
        raise DegeneratePathError(
            f"int Q^2 d<M> = {denominator:.3e} <= {DENOMINATOR_EPS}; increase T or alpha"
        )
    theta_hat = numerator / denominator
    if not math.isfinite(theta_hat):
        raise DegeneratePathError(f"non-finite estimate {theta_hat}")
    return EstimationResult(theta_hat, numerator, denominator, kernel.horizon, signal.kind)


def error_decomposition(
    z: np.ndarray,
    q: np.ndarray,
    m: np.ndarray,
    signal: InputSignal,
    theta: float,
    kernel: KernelBundle,
) -> Dict[str, float]:
    """theta_hat - theta next to -/+ int Q dM / int Q^2 d<M>; the minus reading
    is the discrete identity"""
    result = mle(z, q, signal, kernel)
    q_left = np.asarray(q, dtype=float)[:-1]
    ratio = float(np.sum(q_left * np.diff(m))) / result.denominator
    return {
        "error": result.theta_hat - theta,
        "minus_reading": -ratio,
        "plus_reading": ratio,
    }


def asymptotic_variance_constant(H, theta: float, alpha: float) -> float:
    if as_hurst(H).value > 0.5:
        return 2.0 * theta
    return 2.0 * theta**2 / (2.0 * alpha**2 + theta)


def theoretical_variance(H, theta: float, alpha: float, regime: str) -> float:
    """Limit variance of sqrt(T)(theta_hat - theta)"""
    if theta <= 0:
        raise DomainError(f"theta must be positive, got {theta}")
    if regime == "constant":
        return asymptotic_variance_constant(H, theta, alpha)
    if regime == "optimal":
        return 1.0 / asymptotic_fisher(theta)
    raise DomainError(f"unknown regime {regime!r}, expected one of {REGIMES}")


def input_regime(kind: str) -> str:
    """Variance regime of an input kind: zero is the constant input at alpha = 0,
    anything read from a file is tabulated and has no closed-form limit"""
    if kind == "optimal":
        return "optimal"
    if kind in ("zero", "constant"):
        return "constant"
    return "tabulated"


def regime_alpha(kind: str, alpha: float) -> float:
    return 0.0 if kind == "zero" else float(alpha)


def finite_horizon_variance(fisher_total: float, horizon: float) -> float:
    """T / I_T, the Cramer-Rao level of Var(sqrt(T)(theta_hat - theta)) at horizon T"""
    if not fisher_total > 0:
        raise DomainError(f"Fisher information must be positive, got {fisher_total}")
    return horizon / fisher_total


def constant_input_fisher(theta: float, alpha: float, kernel: KernelBundle) -> float:
    """I_1 + I_2 with v the transform of u = alpha"""
    return fisher_information(InputSignal.constant(alpha, kernel), theta, kernel).total
