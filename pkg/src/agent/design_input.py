"""
Emit the optimal input (t, u, v) for reuse as --input file:PATH.

"""

import logging

from src.agent.base import BaseAgent
from src.inference.design import optimal_v
from src.utils.io import write_table

log = logging.getLogger(__name__)


class DesignInputAgent(BaseAgent):
    command = "design-input"

    def run(self):
        kernel = self.kernel
        signal = optimal_v(kernel)
        manifest = self.save_manifest(kernel.cache_key())
        rows = list(zip(kernel.grid.nodes, signal.u, signal.v))
        write_table(self.log_dir, "design_input", ("t", "u", "v"), rows, fmt=self.fmt, manifest=manifest)
        log.info(f"Optimal input energy (1/T) int v^2 d<M> = {signal.energy(kernel):.6f}")
        return signal
