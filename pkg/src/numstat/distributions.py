"""
Parameter types, log densities and samplers for the matrix-variate family.
"""
from dataclasses import dataclass
from functools import singledispatch
from typing import Union

import numpy as np
from scipy.special import digamma, gammaln

from src.numstat.linalg import SpdMatrix
from src.numstat.special import mv_digamma
from src.utils.exceptions import DimensionMismatchError, DomainError

LOG_2PI = float(np.log(2.0 * np.pi))


def _check_positive(name: str, value) -> None:
    if not np.all(np.asarray(value) > 0) or not np.all(np.isfinite(value)):
        raise DomainError(f"{name} must be finite and positive, got {value}")


@dataclass(frozen=True, eq=False)
class MatrixNormalParams:
    """N_{s,t}(C, V (x) W): mean s x t, row covariance V, column covariance W."""

    mean: np.ndarray
    row_cov: SpdMatrix
    col_cov: SpdMatrix

    def __post_init__(self):
        mean = np.atleast_2d(np.asarray(self.mean, dtype=float))
        if mean.shape != (self.row_cov.dim, self.col_cov.dim):
            raise DimensionMismatchError(
                f"mean shape {mean.shape} inconsistent with covariances "
                f"({self.row_cov.dim}, {self.col_cov.dim})"
            )
        object.__setattr__(self, "mean", mean)


@dataclass(frozen=True, eq=False)
class InvWishartParams:
    """IW(dof, scale) with density proportional to |X|^{-(dof+m+1)/2} exp(-tr(scale X^{-1})/2)."""

    dof: float
    scale: SpdMatrix

    def __post_init__(self):
        if not self.dof > self.scale.dim - 1:
            raise DomainError(f"inverse-Wishart dof {self.dof} must exceed dim - 1 = {self.scale.dim - 1}")

    @property
    def dim(self) -> int:
        return self.scale.dim

    def mean(self) -> np.ndarray:
        if not self.dof > self.dim + 1:
            raise DomainError("inverse-Wishart mean requires dof > dim + 1")
        return self.scale.values / (self.dof - self.dim - 1)

    def expected_inverse(self) -> np.ndarray:
        """E(X^{-1}) = dof * scale^{-1}."""
        return self.dof * self.scale.inverse()

    def expected_log_det(self) -> float:
        """E log|X| = -psi_m(dof / 2) - m log 2 + log|scale|."""
        return float(-mv_digamma(self.dim, 0.5 * self.dof) - self.dim * np.log(2.0) + self.scale.logdet)


@dataclass(frozen=True, eq=False)
class InvGammaParams:
    """IG(shape, rate); shape and rate may be scalars or equal-length vectors."""

    shape: Union[float, np.ndarray]
    rate: Union[float, np.ndarray]

    def __post_init__(self):
        _check_positive("inverse-gamma shape", self.shape)
        _check_positive("inverse-gamma rate", self.rate)
        if np.ndim(self.shape) or np.ndim(self.rate):
            shape = np.asarray(self.shape, dtype=float)
            rate = np.asarray(self.rate, dtype=float)
            if shape.shape != rate.shape:
                raise DimensionMismatchError(f"shape {shape.shape} and rate {rate.shape} differ")
            object.__setattr__(self, "shape", shape)
            object.__setattr__(self, "rate", rate)

    def expected_inverse(self):
        """E(1/X) = shape / rate."""
        return self.shape / self.rate

    def expected_log(self):
        return np.log(self.rate) - digamma(self.shape)

    def mean(self):
        if not np.all(np.asarray(self.shape) > 1):
            raise DomainError("inverse-gamma mean requires shape > 1")
        return self.rate / (self.shape - 1)


def matrix_normal_logpdf(Z: np.ndarray, params: MatrixNormalParams) -> float:
    """
    Exact log density of a matrix-variate normal.

    Args:
        Z: s x t observation
        params: Mean and Kronecker covariance factors

    Returns:
        -(st/2) log 2pi - (t/2) log|V| - (s/2) log|W| - tr(V^{-1} D W^{-1} D^T)/2
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape != params.mean.shape:
        raise DimensionMismatchError(f"observation shape {Z.shape} != mean shape {params.mean.shape}")
    s, t = Z.shape
    D = Z - params.mean
    A = params.row_cov.whiten(D)
    B = params.col_cov.whiten(A.T)
    return float(
        -0.5 * s * t * LOG_2PI
        - 0.5 * t * params.row_cov.logdet
        - 0.5 * s * params.col_cov.logdet
        - 0.5 * np.sum(B * B)
    )


def mvt_logpdf(
    y: np.ndarray,
    location: np.ndarray,
    scale: SpdMatrix,
    tail_exponent: float,
) -> Union[float, np.ndarray]:
    """
    Log density proportional to (1 + (y - mu)^T A (y - mu))^{-tail_exponent/2}.

    `scale` is the quadratic-form matrix A. Matching a standard multivariate t
    gives dof = tail_exponent - m and scatter (dof * A)^{-1}. Rows of a 2-D `y`
    are evaluated independently.
    """
    location = np.asarray(location, dtype=float).ravel()
    m = location.shape[0]
    if scale.dim != m:
        raise DimensionMismatchError(f"scale dim {scale.dim} != location length {m}")
    if not tail_exponent > m:
        raise DomainError(f"tail exponent {tail_exponent} must exceed dimension {m}")
    y = np.asarray(y, dtype=float)
    diff = np.atleast_2d(y) - location
    quad = scale.quad(diff.T)
    const = (
        gammaln(0.5 * tail_exponent)
        - gammaln(0.5 * (tail_exponent - m))
        - 0.5 * m * np.log(np.pi)
        + 0.5 * scale.logdet
    )
    out = const - 0.5 * tail_exponent * np.log1p(quad)
    return float(out[0]) if y.ndim == 1 else out


@singledispatch
def sample(params, rng: np.random.Generator, n: int = 1) -> np.ndarray:
    """
    Draw n i.i.d. samples from the distribution described by `params`.

    Returns arrays of shape (n,) for inverse-gamma, (n, m, m) for
    inverse-Wishart and (n, s, t) for matrix-normal.
    """
    raise DomainError(f"no sampler for {type(params).__name__}")


def _check_count(n: int) -> None:
    if n < 1:
        raise DomainError(f"sample count must be at least 1, got {n}")


@sample.register
def _(params: InvGammaParams, rng: np.random.Generator, n: int = 1) -> np.ndarray:
    _check_count(n)
    if np.ndim(params.shape):
        raise DomainError("sampling needs scalar inverse-gamma parameters")
    return params.rate / rng.gamma(params.shape, 1.0, size=n)


@sample.register
def _(params: InvWishartParams, rng: np.random.Generator, n: int = 1) -> np.ndarray:
    # Bartlett: Sigma^{-1} = M A A^T M^T with M M^T = scale^{-1}; take M = L^{-T}
    _check_count(n)
    m = params.dim
    A = np.zeros((n, m, m))
    for i in range(m):
        A[:, i, i] = np.sqrt(rng.chisquare(params.dof - i, size=n))
        if i:
            A[:, i, :i] = rng.standard_normal((n, i))
    G = params.scale.chol @ np.transpose(np.linalg.inv(A), (0, 2, 1))
    draws = G @ np.transpose(G, (0, 2, 1))
    return 0.5 * (draws + np.transpose(draws, (0, 2, 1)))


@sample.register
def _(params: MatrixNormalParams, rng: np.random.Generator, n: int = 1) -> np.ndarray:
    _check_count(n)
    s, t = params.mean.shape
    Z = rng.standard_normal((n, s, t))
    return params.mean + params.row_cov.chol @ Z @ params.col_cov.chol.T
