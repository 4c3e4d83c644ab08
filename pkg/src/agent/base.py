"""
Shared plumbing for the command agents: parameters, kernel, input and manifest.

"""

import logging
import os
from functools import cached_property
from typing import Optional

from omegaconf import OmegaConf

from src.inference.design import input_signal
from src.model.kernel import KernelBundle, build_kernel, default_cache_dir
from src.model.mfbm import HurstParam
from src.model.process import InputSignal
from src.utils.io import RunManifest
from src.utils.numerics import TimeGrid

log = logging.getLogger(__name__)

# not part of the reproducible parameter set
_LOCAL_KEYS = ("log_dir", "cache_dir", "n_workers")


class BaseAgent:
    command = ""

    def __init__(self, cfg):
        self.cfg = cfg
        self.log_dir = cfg.log_dir
        os.makedirs(self.log_dir, exist_ok=True)
        self.hurst = HurstParam(cfg.hurst)
        self.theta = float(cfg.theta)
        self.alpha = float(cfg.get("alpha", 0.0))
        self.input = str(cfg.get("input", "constant"))
        self.seed = int(cfg.get("seed", 42))
        self.fmt = cfg.get("format", "csv")
        self.cache_dir = cfg.get("cache_dir") or default_cache_dir()
        self.n_workers = cfg.get("n_workers")
        self.grid = TimeGrid(cfg.horizon, cfg.steps)

    @cached_property
    def kernel(self) -> KernelBundle:
        return build_kernel(
            self.grid,
            self.hurst,
            cache_dir=self.cache_dir,
            n_workers=self.n_workers,
            progress=True,
        )

    def signal(self, spec: Optional[str] = None) -> InputSignal:
        return input_signal(spec or self.input, self.kernel, self.alpha)

    def manifest(self, kernel_hash: Optional[str] = None) -> RunManifest:
        params = OmegaConf.to_container(self.cfg, resolve=True)
        params.pop("_target_", None)
        for key in _LOCAL_KEYS:
            params.pop(key, None)
        return RunManifest(
            command=self.command,
            params=params,
            seed=self.seed,
            kernel_hash=kernel_hash,
        )

    def save_manifest(self, kernel_hash: Optional[str] = None) -> RunManifest:
        manifest = self.manifest(kernel_hash)
        manifest.save(self.log_dir)
        return manifest

    def run(self):
        raise NotImplementedError
