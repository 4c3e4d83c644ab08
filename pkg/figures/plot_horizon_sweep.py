"""Plot Var sqrt(T)(theta_hat - theta) against T, one panel per H.

Usage:
    python figures/plot_horizon_sweep.py [--base runs/mc_study] [--output figures/horizon_sweep.pdf]

Expected data directory structure (one mc-study run per directory):
    runs/mc_study/H{H}_th{theta}_a{alpha}_{input}_T{T}_n{n}_r{reps}_{seed}/summary.csv
"""

import argparse
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib
import matplotlib.pyplot as plt
import numpy as np

# RA-L / IEEE style
matplotlib.rcParams.update({
    "font.family": "serif",
    "font.serif": ["Times New Roman", "Times", "DejaVu Serif"],
    "mathtext.fontset": "stix",
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "figure.dpi": 300,
    "axes.linewidth": 0.6,
    "xtick.major.width": 0.5,
    "ytick.major.width": 0.5,
    "xtick.major.size": 3,
    "ytick.major.size": 3,
    "grid.linewidth": 0.4,
    "lines.linewidth": 1.5,
    "lines.markersize": 5,
    "savefig.bbox": "tight",
    "savefig.pad_inches": 0.02,
})

BASE_DIR = Path("runs/mc_study")

# one color per input; dashed = T/I_T, dotted = T -> inf
COLORS = {
    "constant": "#2471a3",  # muted blue
    "optimal": "#c0392b",   # muted red
}


def load_summaries(base_dir):
    """{(H, input): [(T, var, se, finite_target, target), ...]} sorted by T"""
    groups = defaultdict(list)
    for path in sorted(base_dir.glob("*/summary.csv")):
        with open(path) as f:
            rows = [r for r in csv.DictReader(line for line in f if not line.startswith("#"))]
        if not rows:
            continue
        r = rows[0]
        key = (float(r["config.hurst"]), r["config.input"])
        groups[key].append((
            float(r["config.horizon"]),
            float(r["variance"]),
            float(r["variance_se"]),
            float(r["finite_horizon_target"]),
            float(r["target_variance"]),
        ))
    return {k: sorted(v) for k, v in groups.items()}


def plot(groups, output):
    hursts = sorted({h for h, _ in groups})
    if not hursts:
        raise SystemExit("no summary.csv found")
    fig, axes = plt.subplots(1, len(hursts), figsize=(3.5 * len(hursts), 2.4), squeeze=False)
    for ax, H in zip(axes[0], hursts):
        for (h, kind), points in groups.items():
            if h != H:
                continue
            T, var, se, finite, target = map(np.array, zip(*points))
            color = COLORS.get(kind, "#404040")
            ax.errorbar(T, var, yerr=se, fmt="o", color=color, capsize=2, label=kind)
            ax.plot(T, finite, ls="--", color=color, lw=0.8)
            ax.axhline(target[0], ls=":", color=color, lw=0.8)
        ax.set_xscale("log")
        ax.set_xlabel(r"$T$")
        ax.set_title(rf"$H = {H:g}$")
        ax.grid(alpha=0.3)
    axes[0][0].set_ylabel(r"Var $\sqrt{T}(\hat\theta_T - \theta)$")
    axes[0][0].legend(frameon=False)
    output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(output)
    plt.close(fig)
    print(f"Saved {output}")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--base", type=Path, default=BASE_DIR)
    parser.add_argument("--output", type=Path, default=Path("figures/horizon_sweep.pdf"))
    args = parser.parse_args()
    plot(load_summaries(args.base), args.output)


if __name__ == "__main__":
    main()
