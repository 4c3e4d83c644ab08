"""
Launcher for all experiments.

    python scripts/run.py --config-name mc_study hurst=0.3 input=optimal reps=1000

"""

import logging
import os
import random
import sys

import hydra
import numpy as np
import pretty_errors
from omegaconf import OmegaConf

sys.path.insert(0, os.getcwd())
from src.cli import register_resolvers  # noqa: E402

# dummy
print(pretty_errors.__version__)

# allows arbitrary python code execution in configs using the ${eval:''} resolver
register_resolvers()

# add logger
log = logging.getLogger(__name__)

# use line-buffering for both stdout and stderr
sys.stdout = open(sys.stdout.fileno(), mode="w", buffering=1)
sys.stderr = open(sys.stderr.fileno(), mode="w", buffering=1)


def _main(cfg: OmegaConf):
    # resolve immediately so all the ${now:} resolvers will use the same time.
    OmegaConf.resolve(cfg)

    # replications seed their own generators; this only pins stray global draws
    seed = cfg.get("seed", 42)
    random.seed(seed)
    np.random.seed(seed)

    # run agent
    cls = hydra.utils.get_class(cfg._target_)
    agent = cls(cfg)
    agent.run()


@hydra.main(
    version_base=None,
    config_path=os.path.join(os.getcwd(), "config"),
    config_name="mc_study.yaml",
)  # defaults
def main(cfg: OmegaConf):
    _main(cfg)


if __name__ == "__main__":
    main()
