"""
Multivariate gamma and digamma functions.
"""
import numpy as np
from scipy.special import digamma, multigammaln

from src.utils.exceptions import DomainError


def _check_domain(m: int, x: float) -> None:
    if m < 1:
        raise DomainError(f"dimension must be a positive integer, got {m}")
    if not x > (m - 1) / 2.0:
        raise DomainError(f"argument {x} outside domain x > {(m - 1) / 2.0} for dimension {m}")


def log_mvgamma(m: int, x: float) -> float:
    """
    Log of the multivariate gamma function Gamma_m(x).

    Args:
        m: Dimension (positive integer)
        x: Argument, must exceed (m - 1) / 2

    Returns:
        (m(m-1)/4) log(pi) + sum_i log Gamma(x + (1 - i)/2)
    """
    _check_domain(m, x)
    return float(multigammaln(x, m))


def mv_digamma(m: int, x: float) -> float:
    """Derivative of log_mvgamma in x: sum_i psi(x + (1 - i)/2)."""
    _check_domain(m, x)
    offsets = (1.0 - np.arange(1, m + 1)) / 2.0
    return float(np.sum(digamma(x + offsets)))
