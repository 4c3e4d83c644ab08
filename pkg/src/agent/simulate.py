"""
Simulate replications of (xi, X, Z, Q, M) and write one path CSV per replication.

"""

import logging
import os

from src.agent.base import BaseAgent
from src.model.mfbm import sample_paths
from src.model.process import build_path_bundle, write_paths_csv
from src.utils.io import write_csv

log = logging.getLogger(__name__)

INDEX_FILE = "paths_index.csv"


class SimulateAgent(BaseAgent):
    command = "simulate"

    def __init__(self, cfg):
        super().__init__(cfg)
        self.n_paths = int(cfg.get("reps", 1))

    def run(self):
        kernel = self.kernel
        signal = self.signal()
        manifest = self.save_manifest(kernel.cache_key())
        index = []
        for rep, noise in enumerate(sample_paths(self.grid, self.hurst, self.n_paths, self.seed)):
            bundle = build_path_bundle(noise, self.theta, signal, kernel)
            name = f"paths_{rep:04d}.csv"
            write_paths_csv(os.path.join(self.log_dir, name), bundle, manifest)
            index.append((rep, noise.seed, name))
        write_csv(os.path.join(self.log_dir, INDEX_FILE), ("rep", "seed", "file"), index, manifest)
        log.info(f"Simulated {self.n_paths} paths (input={signal.kind}) into {self.log_dir}")
        return index
