"""
Prior-data conflict p-values and the weak-informativity measure built on them.
"""
from typing import Callable

import numpy as np

from src.priorcheck.kde import kde
from src.utils.exceptions import DegenerateQuantileError, DomainError, InsufficientDataError


def conflict_pvalues(adjusted_sample: np.ndarray, baseline_sample: np.ndarray) -> np.ndarray:
    """
    P(S_j^0) = fraction of sample points whose estimated density is no larger
    than the density at baseline point S_j^0.

    Only the ordering of the density values enters.
    """
    adjusted_sample = np.asarray(adjusted_sample, dtype=float)
    baseline_sample = np.asarray(baseline_sample, dtype=float)
    if adjusted_sample.shape[0] == 0 or baseline_sample.shape[0] == 0:
        raise InsufficientDataError("conflict p-values need non-empty samples")
    sample_density = np.sort(kde(adjusted_sample, adjusted_sample))
    baseline_density = kde(adjusted_sample, baseline_sample)
    counts = np.searchsorted(sample_density, baseline_density, side="right")
    return counts / sample_density.shape[0]


def weak_informativity_zeta(baseline_pvals: np.ndarray, alt_pvals: np.ndarray, gamma: float) -> float:
    """
    zeta_gamma = 0 when q_gamma > p_gamma, else 1 - q_gamma / p_gamma.

    p_gamma is the empirical gamma-quantile of the baseline p-values and
    q_gamma the fraction of alternative p-values at or below it.

    Raises:
        DegenerateQuantileError: p_gamma is zero
    """
    if not 0 < gamma < 1:
        raise DomainError(f"gamma must lie in (0, 1), got {gamma}")
    baseline_pvals = np.asarray(baseline_pvals, dtype=float)
    alt_pvals = np.asarray(alt_pvals, dtype=float)
    if baseline_pvals.size == 0 or alt_pvals.size == 0:
        raise InsufficientDataError("zeta needs non-empty p-value samples")
    p_gamma = float(np.quantile(baseline_pvals, gamma, method="inverted_cdf"))
    if not p_gamma > 0:
        raise DegenerateQuantileError("degenerate baseline quantile: p_gamma = 0")
    q_gamma = float(np.mean(alt_pvals <= p_gamma))
    if q_gamma > p_gamma:
        return 0.0
    return 1.0 - q_gamma / p_gamma


def direct_conflict_pvalues(
    simulator: Callable[[np.ndarray, np.random.Generator, int], np.ndarray],
    lam: np.ndarray,
    baseline_sample: np.ndarray,
    count: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Conflict p-values against `count` statistics simulated directly at lam."""
    sample = simulator(np.asarray(lam, dtype=float), rng, count)
    return conflict_pvalues(sample, baseline_sample)


def lower_tail_gap(sample_a: np.ndarray, sample_b: np.ndarray, quantile: float = 0.2) -> float:
    """
    Largest gap between the two empirical CDFs over values at or below the
    `quantile` level of sample_a.
    """
    a = np.sort(np.asarray(sample_a, dtype=float).ravel())
    b = np.sort(np.asarray(sample_b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise InsufficientDataError("tail gap needs non-empty samples")
    cutoff = np.quantile(a, quantile)
    grid = np.concatenate([a[a <= cutoff], b[b <= cutoff]])
    if grid.size == 0:
        return 0.0
    Fa = np.searchsorted(a, grid, side="right") / a.size
    Fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(Fa - Fb)))
