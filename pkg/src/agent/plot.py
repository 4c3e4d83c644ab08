"""
Figures for a finished run directory: the histogram of sqrt(T)(theta_hat - theta)
against its Gaussian target and the Laplace sweep against its targets.

"""

import logging
import math
import os
from typing import Dict, List, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import scipy.stats

from src.utils.errors import MfouError
from src.utils.io import read_csv, read_csv_columns, read_json

log = logging.getLogger(__name__)

# IEEE style
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
    "grid.linewidth": 0.4,
    "savefig.bbox": "tight",
    "savefig.pad_inches": 0.02,
})

# ---------- colors ----------
C_EMPIRICAL = "#5B9BD5"
C_TARGET = "#C00000"
C_FINITE = "#404040"


def plot_error_histogram(
    errors: np.ndarray,
    target_variance: float,
    path: str,
    finite_horizon_variance: Optional[float] = None,
    title: str = "",
) -> str:
    fig, ax = plt.subplots(figsize=(3.5, 2.4))
    ax.hist(errors, bins="auto", density=True, color=C_EMPIRICAL, alpha=0.7, edgecolor="white", linewidth=0.3)
    grid = np.linspace(errors.min(), errors.max(), 400)
    ax.plot(grid, scipy.stats.norm.pdf(grid, scale=math.sqrt(target_variance)), color=C_TARGET, lw=1.0,
            label=rf"$N(0, {target_variance:.3g})$")
    if finite_horizon_variance is not None and math.isfinite(finite_horizon_variance):
        ax.plot(grid, scipy.stats.norm.pdf(grid, scale=math.sqrt(finite_horizon_variance)), color=C_FINITE,
                lw=0.8, ls="--", label=rf"$N(0, T/I_T)$")
    ax.set_xlabel(r"$\sqrt{T}(\hat\theta_T - \theta)$")
    ax.set_ylabel("density")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    fig.savefig(path)
    plt.close(fig)
    log.info(f"Saved {path}")
    return path


def plot_laplace_sweep(rows: List[Dict[str, str]], path: str) -> str:
    rows = [r for r in rows if r["quantity"] == "gamma_z"]
    if not rows:
        raise MfouError("no gamma_z rows to plot")
    mu = np.array([float(r["mu_or_a"]) for r in rows])
    value = np.array([float(r["value"]) for r in rows])
    target = np.array([float(r["target"]) for r in rows])
    order = np.argsort(mu)
    fig, ax = plt.subplots(figsize=(3.5, 2.4))
    ax.plot(mu[order], target[order], color=C_TARGET, lw=1.0, label="limit")
    ax.plot(mu[order], value[order], "o", color=C_EMPIRICAL, ms=4, label=f"T = {float(rows[0]['T']):g}")
    ax.set_xlabel(r"$\mu$")
    ax.set_ylabel(r"$E\,\exp(-\frac{\mu}{T}\int Q^2\,d\langle M\rangle)$")
    ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    fig.savefig(path)
    plt.close(fig)
    log.info(f"Saved {path}")
    return path


def read_rows(run_dir: str, name: str) -> Optional[List[Dict]]:
    """Rows of <name>.csv, else of <name>.json; None when neither exists"""
    path = os.path.join(run_dir, f"{name}.csv")
    if os.path.exists(path):
        return read_csv(path)
    path = os.path.join(run_dir, f"{name}.json")
    if os.path.exists(path):
        return read_json(path)["rows"]
    return None


class PlotAgent:
    """Reads replications.csv, summary and laplace tables (csv or json) from run_dir
    (default: log_dir)"""

    command = "plot"

    def __init__(self, cfg):
        self.run_dir = cfg.get("run_dir") or cfg.log_dir
        self.out_dir = cfg.get("out_dir") or self.run_dir
        self.fig_format = cfg.get("fig_format", "svg")
        os.makedirs(self.out_dir, exist_ok=True)

    def run(self) -> List[str]:
        written = []
        replications = os.path.join(self.run_dir, "replications.csv")
        summary = read_rows(self.run_dir, "summary")
        if os.path.exists(replications) and summary:
            cols = read_csv_columns(replications, ("sqrtT_error",))
            errors = cols["sqrtT_error"][np.isfinite(cols["sqrtT_error"])]
            info = summary[0]
            written.append(
                plot_error_histogram(
                    errors,
                    float(info["target_variance"]),
                    os.path.join(self.out_dir, f"error_histogram.{self.fig_format}"),
                    finite_horizon_variance=float(info["finite_horizon_target"]),
                    title=f"H={info['config.hurst']}, input={info['config.input']}",
                )
            )
        laplace = read_rows(self.run_dir, "laplace")
        if laplace:
            written.append(
                plot_laplace_sweep(laplace, os.path.join(self.out_dir, f"laplace.{self.fig_format}"))
            )
        if not written:
            raise MfouError(f"nothing to plot in {self.run_dir}")
        return written
