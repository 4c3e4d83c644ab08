"""
Monte Carlo study agent around the harness in src.agent.mc.

"""

import logging

from src.agent.base import BaseAgent
from src.agent.mc import McConfig, run_study, write_study

log = logging.getLogger(__name__)


class McStudyAgent(BaseAgent):
    command = "mc-study"

    def __init__(self, cfg):
        super().__init__(cfg)
        self.config = McConfig(
            hurst=self.hurst.value,
            theta=self.theta,
            alpha=self.alpha,
            input=self.input,
            horizon=self.grid.horizon,
            n_steps=self.grid.n_steps,
            n_reps=int(cfg.reps),
            seed=self.seed,
            out_dir=self.log_dir,
            cache_dir=self.cache_dir,
            chunk_size=int(cfg.get("chunk_size", 50)),
            n_workers=self.n_workers,
        )

    def run(self):
        kernel = self.kernel
        summary = run_study(self.config, kernel=kernel)
        manifest = self.save_manifest(kernel.cache_key())
        write_study(summary, self.log_dir, fmt=self.fmt, manifest=manifest)
        return summary
