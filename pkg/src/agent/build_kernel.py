"""
Build (or load) the kernel bundle for (H, T, n) and write its diagonal tables.

"""

import logging

import numpy as np

from src.agent.base import BaseAgent
from src.model.kernel import lambda_h
from src.utils.io import write_table
from src.utils.monitor import log_summary

log = logging.getLogger(__name__)


class KernelAgent(BaseAgent):
    command = "kernel"

    def run(self):
        kernel = self.kernel
        manifest = self.save_manifest(kernel.cache_key())
        rows = list(
            zip(
                kernel.grid.nodes,
                kernel.bracket,
                kernel.m_prime,
                kernel.psi_diag,
                np.diag(kernel.g_full),
            )
        )
        write_table(
            self.log_dir,
            "kernel",
            ("t", "bracket", "m_prime", "psi", "g_diag"),
            rows,
            fmt=self.fmt,
            manifest=manifest,
        )
        log_summary(
            log,
            "Kernel Summary",
            {
                "H": self.hurst.value,
                "T / n": f"{self.grid.horizon} / {self.grid.n_steps}",
                "<M>_T": float(kernel.bracket[-1]),
                "lambda_H": lambda_h(self.hurst.value),
                "cache key": kernel.cache_key(),
            },
        )
        return kernel
