"""
Grid scan of candidate priors against a base prior.

An MDP regression of the summary statistic on the hyperparameters is fitted
once over a simulated corpus. For every grid point the statistics of the
nearest simulated hyperparameters are regression-adjusted to that point,
a density estimate is built and the base-prior sample is scored against it.
"""
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator

from src.basis.kernel_basis import BasisMap, build_basis
from src.model.hyperparameters import Hyperparameters
from src.model.state import VariationalState
from src.priorcheck.conflict import conflict_pvalues, weak_informativity_zeta
from src.regadjust.adjustment import QuantileResiduals, adjust_particles, knn_search
from src.utils.exceptions import DimensionMismatchError, DomainError
from src.utils.logger import get_application_logger
from src.vsugs.online import OnlineOptions, fit_online

logger = get_application_logger(__name__)

Simulator = Callable[[np.ndarray, np.random.Generator, int], np.ndarray]


class ScanConfig(BaseModel):
    """Grid, base prior, level and sample sizes for prior_scan."""

    grid: List[Tuple[float, ...]]
    baseline: Tuple[float, ...]
    gamma: float = Field(0.05, gt=0, lt=1)
    k_neighbors: int = Field(1000, ge=1)
    sim_count: int = Field(50_000, ge=1)
    baseline_count: int = Field(1000, ge=2)
    baseline_mode: str = Field("regression", pattern="^(regression|direct)$")
    direct_count: int = Field(10_000, ge=2)
    seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)

    @field_validator("grid")
    @classmethod
    def _grid_not_empty(cls, grid):
        if not grid:
            raise ValueError("grid must contain at least one point")
        return grid

    @classmethod
    def regular_grid(
        cls,
        bounds: Tuple[Tuple[float, float], Tuple[float, float]],
        size: int,
        baseline: Tuple[float, float],
        **kwargs,
    ) -> "ScanConfig":
        """size x size grid spanning `bounds` (inclusive), first coordinate varying slowest."""
        axes = [np.linspace(lo, hi, size) for lo, hi in bounds]
        grid = [(float(a), float(b)) for a in axes[0] for b in axes[1]]
        return cls(grid=grid, baseline=tuple(baseline), **kwargs)

    @classmethod
    def from_settings(cls, settings) -> "ScanConfig":
        return cls.regular_grid(
            ((settings.scan_sigma0_min, settings.scan_sigma0_max), (settings.scan_sigma1_min, settings.scan_sigma1_max)),
            settings.scan_grid_size,
            (settings.scan_baseline_sigma0, settings.scan_baseline_sigma1),
            gamma=settings.scan_gamma,
            k_neighbors=settings.scan_k_neighbors,
            sim_count=settings.scan_sim_count,
            baseline_count=settings.scan_baseline_count,
            baseline_mode=settings.scan_baseline_mode,
            direct_count=settings.scan_direct_count,
            seed=settings.seed,
            workers=settings.workers,
        )


@dataclass(frozen=True, eq=False)
class ScanModel:
    """Fitted regression of statistics on hyperparameters, with its corpus."""

    state: VariationalState
    basis: BasisMap
    h: Hyperparameters
    residuals: QuantileResiduals

    def adjusted_sample(self, lam: np.ndarray, k: int) -> np.ndarray:
        lam = np.asarray(lam, dtype=float).ravel()
        neighbors = knn_search(self.basis.standardizer.apply(lam), self.residuals.X_std, k)
        return adjust_particles(lam, neighbors, self.residuals, self.state, self.basis, self.h).particles


@dataclass
class ScanResult:
    grid: np.ndarray
    zeta: np.ndarray
    pvalues: np.ndarray
    baseline_pvalues: np.ndarray
    elapsed_seconds: float = 0.0

    def to_frame(self, names: Tuple[str, ...] = ("sigma0", "sigma1")) -> pd.DataFrame:
        frame = pd.DataFrame(self.grid, columns=list(names)[: self.grid.shape[1]])
        frame["zeta"] = self.zeta
        return frame

    def pvalue_frame(self) -> pd.DataFrame:
        """Long format: grid index, sample index, p-value; baseline rows have grid index -1."""
        rows = [
            pd.DataFrame({"grid_index": -1, "sample": np.arange(self.baseline_pvalues.size), "pvalue": self.baseline_pvalues})
        ]
        for g, p in enumerate(self.pvalues):
            rows.append(pd.DataFrame({"grid_index": g, "sample": np.arange(p.size), "pvalue": p}))
        return pd.concat(rows, ignore_index=True)


def fit_scan_model(
    lambdas: np.ndarray,
    stats: np.ndarray,
    h: Hyperparameters,
    rng: np.random.Generator,
    opts: Optional[OnlineOptions] = None,
    kernel: str = "literal",
    bandwidth_mode: str = "mean",
) -> ScanModel:
    """One-pass fit of statistics on hyperparameters over a simulated corpus."""
    lambdas = np.atleast_2d(np.asarray(lambdas, dtype=float))
    stats = np.atleast_2d(np.asarray(stats, dtype=float))
    if lambdas.shape[0] != stats.shape[0]:
        raise DimensionMismatchError(f"{lambdas.shape[0]} hyperparameter rows but {stats.shape[0]} statistics")
    basis = build_basis(lambdas, h.basis_count, rng, kernel, bandwidth_mode)
    fit = fit_online(zip(lambdas, stats), h, basis, opts)
    residuals = QuantileResiduals.compute(lambdas, stats, fit.state, basis, h)
    return ScanModel(fit.state, basis, h, residuals)


def prior_scan(simulator: Simulator, cfg: ScanConfig, model: ScanModel) -> ScanResult:
    """
    zeta_gamma at every grid point relative to cfg.baseline.

    Args:
        simulator: lam, rng, size -> size x d statistics
        cfg: Grid, baseline, level and sample sizes
        model: Fitted regression over the simulated corpus

    Returns:
        ScanResult with one zeta and one p-value sample per grid point
    """
    start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    baseline = np.asarray(cfg.baseline, dtype=float)
    grid = np.asarray(cfg.grid, dtype=float)
    if grid.shape[1] != baseline.shape[0]:
        raise DomainError("grid points and baseline differ in dimension")

    observed = simulator(baseline, rng, cfg.baseline_count)
    if cfg.baseline_mode == "direct":
        reference = simulator(baseline, rng, cfg.direct_count)
    else:
        reference = model.adjusted_sample(baseline, cfg.k_neighbors)
    baseline_p = conflict_pvalues(reference, observed)

    def score(lam: np.ndarray) -> Tuple[float, np.ndarray]:
        p = conflict_pvalues(model.adjusted_sample(lam, cfg.k_neighbors), observed)
        return weak_informativity_zeta(baseline_p, p, cfg.gamma), p

    logger.info(f"Scanning {grid.shape[0]} grid points with {cfg.workers} worker(s)")
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            scored = list(pool.map(score, grid))
    else:
        scored = [score(lam) for lam in grid]

    elapsed = time.perf_counter() - start
    logger.info(f"Prior scan finished in {elapsed:.2f}s")
    return ScanResult(
        grid=grid,
        zeta=np.array([z for z, _ in scored]),
        pvalues=np.array([p for _, p in scored]),
        baseline_pvalues=baseline_p,
        elapsed_seconds=elapsed,
    )
