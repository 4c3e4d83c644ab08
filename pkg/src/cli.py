"""
Command-line front end.

    mfou mc-study --hurst 0.7 --theta 1 --alpha 1 --horizon 30 --steps 600 --reps 400 --seed 42

Each subcommand composes config/<name>.yaml with the flags given, instantiates
the agent named by `_target_` and runs it. Exit codes: 0 ok, 1 for a domain or
numerical failure, 2 for a usage error.

"""

import argparse
import logging
import math
import os
import sys
from typing import List, Optional

import hydra
from omegaconf import DictConfig, OmegaConf

from src.model.mfbm import HurstParam
from src.utils.errors import MfouError

log = logging.getLogger(__name__)

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "config")

# subcommand -> config name
COMMANDS = {
    "kernel": "kernel",
    "simulate": "simulate",
    "estimate": "estimate",
    "design-input": "design_input",
    "fisher": "fisher",
    "laplace": "laplace",
    "mc-study": "mc_study",
    "plot": "plot",
}

# flag dest -> config key
_FLAG_KEYS = {
    "hurst": "hurst",
    "theta": "theta",
    "alpha": "alpha",
    "horizon": "horizon",
    "steps": "steps",
    "reps": "reps",
    "seed": "seed",
    "input": "input",
    "out": "log_dir",
    "format": "format",
    "paths": "paths_dir",
}


def register_resolvers():
    OmegaConf.register_new_resolver("eval", eval, replace=True)
    OmegaConf.register_new_resolver("round_up", math.ceil, replace=True)
    OmegaConf.register_new_resolver("round_down", math.floor, replace=True)


def _input_spec(value: str) -> str:
    if value in ("zero", "constant", "optimal") or (value.startswith("file:") and len(value) > 5):
        return value
    raise argparse.ArgumentTypeError(f"expected zero|constant|optimal|file:PATH, got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfou", description="Mixed fractional OU toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        p = sub.add_parser(command)
        p.add_argument("--hurst", type=float)
        p.add_argument("--theta", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument("--horizon", type=float)
        p.add_argument("--steps", type=int)
        p.add_argument("--reps", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--input", type=_input_spec)
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--format", choices=("csv", "json"))
        if command == "estimate":
            p.add_argument("--paths", metavar="DIR", help="directory written by `simulate` (default: --out)")
    return parser


def load_config(command: str, overrides: Optional[dict] = None) -> DictConfig:
    """config/<command>.yaml without the hydra-only keys, merged with overrides"""
    register_resolvers()
    cfg = OmegaConf.load(os.path.join(CONFIG_DIR, f"{COMMANDS[command]}.yaml"))
    for key in ("defaults", "hydra"):
        cfg.pop(key, None)
    cfg = OmegaConf.merge(cfg, OmegaConf.create(overrides or {}))
    OmegaConf.resolve(cfg)
    return cfg


def dispatch(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 2

    overrides = {
        key: getattr(args, dest)
        for dest, key in _FLAG_KEYS.items()
        if getattr(args, dest, None) is not None
    }
    try:
        cfg = load_config(args.command, overrides)
        if "hurst" in cfg:
            HurstParam(cfg.hurst)
        agent = hydra.utils.get_class(cfg._target_)(cfg)
        agent.run()
    except MfouError as e:
        print(f"mfou {args.command}: {e}", file=sys.stderr)
        return 1
    return 0


def main():
    logging.basicConfig(
        level=logging.INFO,
        format="[%(asctime)s][%(name)s][%(levelname)s] - %(message)s",
    )
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
