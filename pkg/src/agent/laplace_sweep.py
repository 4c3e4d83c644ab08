"""
Laplace transform sweeps: the scaled transform against its long-horizon target,
and the Psi-system transform against the eigenvalue product.

"""

import logging
import math

from src.agent.base import BaseAgent
from src.inference.design import build_operator
from src.inference.laplace import (
    constant_drift_target,
    eigen_laplace,
    exact_rate_limit,
    gamma_z_laplace,
    laplace_rate,
    optimal_input_target,
    psi_laplace,
)
from src.utils.io import write_table

log = logging.getLogger(__name__)

LAPLACE_COLUMNS = ("quantity", "theta", "mu_or_a", "T", "H", "value", "target", "rel_err")


def _rel_err(value: float, target: float) -> float:
    return abs(value - target) / abs(target) if target != 0 else abs(value)


class LaplaceAgent(BaseAgent):
    command = "laplace"

    def __init__(self, cfg):
        super().__init__(cfg)
        self.mu_values = [float(mu) for mu in cfg.get("mu_values", (0.5, 1.0, 2.0, 4.0))]
        self.a_values = [float(a) for a in cfg.get("a_values", (-0.3, 0.5, 1.0, 2.0))]

    def _target(self, mu: float, kind: str) -> float:
        if kind == "optimal":
            return optimal_input_target(mu, self.theta)
        alpha = self.alpha if kind == "constant" else 0.0
        return constant_drift_target(mu, self.theta, alpha, self.hurst)

    def run(self):
        kernel = self.kernel
        signal = self.signal()
        T, H = kernel.horizon, self.hurst.value
        rows = []
        for mu in self.mu_values:
            value = gamma_z_laplace(mu, self.theta, signal, kernel).value
            target = self._target(mu, signal.kind)
            rows.append(("gamma_z", self.theta, mu, T, H, value, target, _rel_err(value, target)))
            if signal.kind == "optimal":
                rate = laplace_rate(mu, self.theta, signal, kernel)
                limit = exact_rate_limit(mu, self.theta)
                rows.append(("rate", self.theta, mu, T, H, rate, limit, _rel_err(rate, limit)))

        table = build_operator(self.theta, kernel)
        for a in self.a_values:
            value = psi_laplace(a, self.theta, kernel)
            target = eigen_laplace(a, self.theta, kernel, table=table)
            # compare on the log scale, the values themselves decay like exp(-c T)
            rel = _rel_err(math.log(value), math.log(target)) if target != 1.0 else abs(value - 1.0)
            rows.append(("psi_vs_eigen", self.theta, a, T, H, value, target, rel))

        for row in rows:
            log.info(f"{row[0]:>13} mu/a={row[2]:<5} value={row[5]:.6g} target={row[6]:.6g} rel_err={row[7]:.3e}")
        manifest = self.save_manifest(kernel.cache_key())
        write_table(self.log_dir, "laplace", LAPLACE_COLUMNS, rows, fmt=self.fmt, manifest=manifest)
        return rows
