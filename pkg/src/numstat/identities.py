"""
Closed-form identities used by the variational updates.
"""
import numpy as np

from src.numstat.linalg import SpdMatrix
from src.numstat.special import log_mvgamma
from src.utils.exceptions import DimensionMismatchError, DomainError


def expected_quadratic_form(
    mean: np.ndarray, row_cov: np.ndarray, col_cov: np.ndarray, A: np.ndarray
) -> np.ndarray:
    """
    E(X^T A X) for X ~ N_{p,q}(mean, row_cov (x) col_cov).

    Returns:
        tr(row_cov A^T) col_cov + mean^T A mean
    """
    mean = np.atleast_2d(mean)
    if A.shape != (mean.shape[0], mean.shape[0]):
        raise DimensionMismatchError(f"A must be {mean.shape[0]}x{mean.shape[0]}")
    return np.trace(row_cov @ A.T) * col_cov + mean.T @ A @ mean


def gaussian_integral_identity(V: SpdMatrix, W: SpdMatrix, C: np.ndarray) -> float:
    """
    Log of the integral over Z of exp(tr(-(V^{-1} Z W^{-1} Z^T - 2 V^{-1} C W^{-1} Z^T)/2)).

    Returns:
        (st/2) log 2pi + (t/2) log|V| + (s/2) log|W| + tr(V^{-1} C W^{-1} C^T)/2
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    s, t = C.shape
    if (V.dim, W.dim) != (s, t):
        raise DimensionMismatchError(f"C shape {C.shape} inconsistent with V ({V.dim}) and W ({W.dim})")
    B = W.whiten(V.whiten(C).T)
    return float(
        0.5 * s * t * np.log(2.0 * np.pi)
        + 0.5 * t * V.logdet
        + 0.5 * s * W.logdet
        + 0.5 * np.sum(B * B)
    )


def inverse_wishart_integral_identity(A: SpdMatrix, a: float) -> float:
    """
    Log of the integral over psi > 0 of |psi|^{-(a+m+1)/2} exp(-tr(A psi^{-1})/2).

    Returns:
        -(a/2) log|A| + (am/2) log 2 + log Gamma_m(a/2)
    """
    m = A.dim
    if not a > m - 1:
        raise DomainError(f"integral diverges for a={a} with m={m}")
    return float(-0.5 * a * A.logdet + 0.5 * a * m * np.log(2.0) + log_mvgamma(m, 0.5 * a))
