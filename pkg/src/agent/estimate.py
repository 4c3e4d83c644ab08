"""
Estimate theta from path CSVs written by the simulate command.

"""

import logging
import os

from src.agent.base import BaseAgent
from src.agent.simulate import INDEX_FILE
from src.inference.estimator import input_regime, mle, regime_alpha
from src.model.process import read_paths_csv
from src.utils.errors import DimensionError, MfouError
from src.utils.io import read_csv, write_table

log = logging.getLogger(__name__)

ESTIMATE_COLUMNS = ("seed", "H", "theta", "alpha", "regime", "T", "n", "theta_hat")


class EstimateAgent(BaseAgent):
    command = "estimate"

    def __init__(self, cfg):
        super().__init__(cfg)
        self.paths_dir = cfg.get("paths_dir") or self.log_dir

    def _path_files(self):
        index = os.path.join(self.paths_dir, INDEX_FILE)
        if not os.path.exists(index):
            raise MfouError(f"no {INDEX_FILE} in {self.paths_dir}; run simulate first")
        return [(int(r["seed"]), os.path.join(self.paths_dir, r["file"])) for r in read_csv(index)]

    def run(self):
        kernel = self.kernel
        signal = self.signal()
        regime = input_regime(signal.kind)
        alpha = regime_alpha(signal.kind, self.alpha)
        rows = []
        for seed, path in self._path_files():
            grid, cols = read_paths_csv(path)
            if grid != self.grid:
                raise DimensionError(f"{path} has grid {grid}, expected {self.grid}")
            result = mle(cols["Z"], cols["Q"], signal, kernel)
            rows.append(
                (
                    seed,
                    self.hurst.value,
                    self.theta,
                    alpha,
                    regime,
                    grid.horizon,
                    grid.n_steps,
                    result.theta_hat,
                )
            )
            log.info(f"seed={seed}: theta_hat={result.theta_hat:.6f}")
        manifest = self.save_manifest(kernel.cache_key())
        write_table(self.log_dir, "estimates", ESTIMATE_COLUMNS, rows, fmt=self.fmt, manifest=manifest)
        return rows
