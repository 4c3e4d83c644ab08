"""
Monte Carlo harness: replicate simulate -> transform -> estimate and summarize
sqrt(T)(theta_hat - theta).

Replications are processed in fixed-size chunks on a thread pool. Every
replication draws its normals from its own split seed, so the per-replication
records do not depend on the chunking or on the number of workers.

"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.stats
from tqdm import tqdm

from src.inference.design import fisher_information, input_signal, optimal_v
from src.inference.estimator import (
    DENOMINATOR_EPS,
    finite_horizon_variance,
    input_regime,
    mle_terms,
    regime_alpha,
    theoretical_variance,
)
from src.model.kernel import KernelBundle, build_kernel, default_cache_dir
from src.model.mfbm import HurstParam, cholesky_factor, sample_increments, split_seed
from src.model.process import InputSignal, compute_q, simulate_x, transform_z
from src.utils.errors import ContractViolation, StudyInvalidError
from src.utils.io import RunManifest, write_csv, write_table
from src.utils.monitor import Timer, log_execution_time, log_summary
from src.utils.numerics import TimeGrid

log = logging.getLogger(__name__)

MIN_NORMALITY_SAMPLES = 50
MAX_DROPPED_FRACTION = 0.05
REPLICATION_COLUMNS = ("rep", "seed", "theta_hat", "sqrtT_error", "denom")


@dataclass
class McConfig:
    hurst: float
    theta: float
    alpha: float = 1.0
    input: str = "constant"
    horizon: float = 30.0
    n_steps: int = 600
    n_reps: int = 400
    seed: int = 42
    out_dir: Optional[str] = None
    cache_dir: Optional[str] = None
    chunk_size: int = 50
    n_workers: Optional[int] = None

    def __post_init__(self):
        HurstParam(self.hurst)
        if self.n_reps < 2:
            raise ContractViolation(f"n_reps must be at least 2, got {self.n_reps}")
        if not self.theta > 0:
            raise ContractViolation(f"theta must be positive, got {self.theta}")
        assert self.chunk_size >= 1, "chunk_size must be positive"

    @property
    def regime(self) -> str:
        return input_regime(self.input)

    @property
    def target_alpha(self) -> float:
        return regime_alpha(self.input, self.alpha)

    def echo(self) -> Dict:
        """Parameters that determine the replications"""
        out = asdict(self)
        for key in ("out_dir", "cache_dir", "n_workers"):
            out.pop(key)
        return out


@dataclass(frozen=True)
class McRecord:
    rep: int
    seed: int
    theta_hat: float
    sqrt_t_error: float
    denominator: float

    @property
    def degenerate(self) -> bool:
        return not (self.denominator > DENOMINATOR_EPS and math.isfinite(self.theta_hat))


@dataclass
class McSummary:
    config: Dict
    n_reps: int
    n_effective: int
    n_dropped: int
    mean: float
    variance: float
    variance_se: float
    target_variance: float
    finite_horizon_target: float
    fisher_total: float
    normality_statistic: float
    normality_threshold: float
    normality_passed: bool
    median_abs_error: float
    mse: float
    efficiency_ratio: float
    efficiency_flagged: bool
    records: List[McRecord] = field(default_factory=list, repr=False)

    def to_dict(self) -> Dict:
        out = asdict(self)
        out.pop("records")
        return out

    def errors(self) -> np.ndarray:
        return np.array([r.sqrt_t_error for r in self.records if not r.degenerate])


##################################### statistics #####################################


def normality_threshold(n: int) -> float:
    """Rejection level 1.5 * 1.36 / sqrt(n) for the sup-distance"""
    return 1.5 * 1.36 / math.sqrt(n)


def normality_check(samples: Sequence[float], target_variance: float) -> float:
    """sup |F_n - Phi_{0, target}| over the empirical CDF"""
    samples = np.asarray(samples, dtype=float)
    if samples.size < MIN_NORMALITY_SAMPLES:
        raise ContractViolation(
            f"normality check needs at least {MIN_NORMALITY_SAMPLES} samples, got {samples.size}"
        )
    assert target_variance > 0, "target variance must be positive"
    return float(scipy.stats.kstest(samples, "norm", args=(0.0, math.sqrt(target_variance))).statistic)


def _moments(values: np.ndarray):
    """Mean and unbiased variance with compensated summation"""
    n = len(values)
    mean = math.fsum(values) / n
    var = math.fsum((values - mean) ** 2) / (n - 1)
    return mean, var


def efficiency_ratio(
    summary: McSummary,
    theta: float,
    horizon: float,
    kernel: KernelBundle,
    fisher_opt: Optional[float] = None,
) -> float:
    """(I_1 + I_2 at v_opt) * E(theta_hat - theta)^2"""
    if fisher_opt is None:
        fisher_opt = fisher_information(optimal_v(kernel), theta, kernel).total
    mse = summary.mse
    if not math.isfinite(mse) or mse == 0.0:
        log.warning(f"Efficiency ratio on a degenerate MSE ({mse}); reported but flagged")
        summary.efficiency_flagged = True
        return fisher_opt * (mse if math.isfinite(mse) else 0.0)
    return fisher_opt * mse


##################################### study #####################################


def _chunk_records(
    seeds: List[int],
    first_rep: int,
    config: McConfig,
    grid: TimeGrid,
    factor: np.ndarray,
    signal: InputSignal,
    kernel: KernelBundle,
) -> List[McRecord]:
    increments = sample_increments(grid, config.hurst, seeds, factor=factor)
    x = simulate_x(increments, config.theta, signal, grid=grid)
    z = transform_z(x, kernel)
    q = compute_q(z, kernel)
    numerator, denominator = mle_terms(z, q, signal.v, kernel)
    with np.errstate(divide="ignore", invalid="ignore"):
        theta_hat = np.where(denominator > DENOMINATOR_EPS, numerator / denominator, np.nan)
    root_t = math.sqrt(grid.horizon)
    return [
        McRecord(
            rep=first_rep + k,
            seed=s,
            theta_hat=float(theta_hat[k]),
            sqrt_t_error=float(root_t * (theta_hat[k] - config.theta)),
            denominator=float(denominator[k]),
        )
        for k, s in enumerate(seeds)
    ]


@log_execution_time(log)
def run_study(config: McConfig, kernel: Optional[KernelBundle] = None) -> McSummary:
    grid = TimeGrid(config.horizon, config.n_steps)
    timer = Timer()
    if kernel is None:
        kernel = build_kernel(
            grid,
            config.hurst,
            cache_dir=config.cache_dir or default_cache_dir(),
            n_workers=config.n_workers,
        )
    assert kernel.grid == grid, "kernel grid differs from the study grid"
    signal = input_signal(config.input, kernel, config.alpha)
    factor = cholesky_factor(grid, config.hurst)
    setup_time = timer()

    seeds = [split_seed(config.seed, r) for r in range(config.n_reps)]
    starts = list(range(0, config.n_reps, config.chunk_size))
    n_workers = config.n_workers or min(8, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        chunks = pool.map(
            lambda s: _chunk_records(
                seeds[s : s + config.chunk_size], s, config, grid, factor, signal, kernel
            ),
            starts,
        )
        records = [r for chunk in tqdm(chunks, total=len(starts), desc="replications") for r in chunk]
    replication_time = timer()

    valid = [r for r in records if not r.degenerate]
    n_dropped = len(records) - len(valid)
    if n_dropped > MAX_DROPPED_FRACTION * config.n_reps:
        raise StudyInvalidError(
            f"{n_dropped} of {config.n_reps} replications are degenerate (> 5%); increase T or alpha"
        )
    errors = np.array([r.sqrt_t_error for r in valid])
    mean, variance = _moments(errors)
    n_eff = len(valid)

    fisher_total = fisher_information(signal, config.theta, kernel).total
    finite_target = finite_horizon_variance(fisher_total, grid.horizon)
    if config.regime == "tabulated":
        log.info("No T -> inf limit for a tabulated input; normality is checked against T / I_T")
        target = finite_target
    else:
        target = theoretical_variance(config.hurst, config.theta, config.target_alpha, config.regime)
    statistic = normality_check(errors, target) if n_eff >= MIN_NORMALITY_SAMPLES else float("nan")
    threshold = normality_threshold(n_eff)
    theta_err = np.array([r.theta_hat - config.theta for r in valid])

    summary = McSummary(
        config=config.echo(),
        n_reps=config.n_reps,
        n_effective=n_eff,
        n_dropped=n_dropped,
        mean=mean,
        variance=variance,
        variance_se=variance * math.sqrt(2.0 / (n_eff - 1)),
        target_variance=target,
        finite_horizon_target=finite_target,
        fisher_total=fisher_total,
        normality_statistic=statistic,
        normality_threshold=threshold,
        normality_passed=bool(statistic <= threshold),
        median_abs_error=float(np.median(np.abs(theta_err))),
        mse=math.fsum(theta_err**2) / n_eff,
        efficiency_ratio=float("nan"),
        efficiency_flagged=False,
        records=records,
    )
    fisher_opt = fisher_total if signal.kind == "optimal" else None
    summary.efficiency_ratio = efficiency_ratio(summary, config.theta, grid.horizon, kernel, fisher_opt)

    log_summary(
        log,
        "Monte Carlo Summary",
        {
            "H / theta / input": f"{config.hurst} / {config.theta} / {config.input}",
            "T / n / reps": f"{config.horizon} / {config.n_steps} / {config.n_reps}",
            "dropped": n_dropped,
            "Var sqrt(T) err": variance,
            "target (T -> inf)": target,
            "target (T / I_T)": summary.finite_horizon_target,
            "KS distance": statistic,
            "KS threshold": threshold,
            "efficiency ratio": summary.efficiency_ratio,
            "seconds (setup / reps / summary)": f"{setup_time:.2f} / {replication_time:.2f} / {timer():.2f}",
        },
    )
    return summary


def write_study(summary: McSummary, out_dir: str, fmt: str = "csv", manifest: Optional[RunManifest] = None):
    """replications.csv plus summary.<fmt>"""
    rows = [(r.rep, r.seed, r.theta_hat, r.sqrt_t_error, r.denominator) for r in summary.records]
    write_csv(os.path.join(out_dir, "replications.csv"), REPLICATION_COLUMNS, rows, manifest)
    flat = {k: v for k, v in summary.to_dict().items() if k != "config"}
    flat.update({f"config.{k}": v for k, v in summary.config.items()})
    write_table(out_dir, "summary", list(flat), [list(flat.values())], fmt=fmt, manifest=manifest)


def study_at_horizons(
    base: McConfig,
    horizons: Sequence[float] = (15.0, 30.0, 60.0),
    kernels: Optional[Dict[float, KernelBundle]] = None,
) -> List[McSummary]:
    """Same study at several horizons with the step size of `base` held fixed"""
    dt = base.horizon / base.n_steps
    out = []
    for horizon in horizons:
        config = McConfig(**{**asdict(base), "horizon": horizon, "n_steps": int(round(horizon / dt))})
        kernel = (kernels or {}).get(horizon)
        out.append(run_study(config, kernel=kernel))
    return out


def consistency_trend(summaries: Sequence[McSummary]) -> bool:
    """Median |theta_hat - theta| strictly decreasing along the sequence"""
    medians = [s.median_abs_error for s in summaries]
    return all(b < a for a, b in zip(medians, medians[1:]))


def theta_compact_check(
    base: McConfig,
    thetas: Sequence[float] = (0.5, 1.0, 2.0),
    kernel: Optional[KernelBundle] = None,
) -> Dict[float, McSummary]:
    """The study repeated over a few theta values standing in for a compact set"""
    return {th: run_study(McConfig(**{**asdict(base), "theta": th}), kernel=kernel) for th in thetas}
