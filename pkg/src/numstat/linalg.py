"""
Cholesky-backed symmetric positive-definite matrices.

Every determinant, solve and quadratic form in the package goes through
the lower factor held by SpdMatrix; no explicit inverses are formed on
hot paths.
"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular

from src.utils.exceptions import DimensionMismatchError, DomainError, NotPositiveDefiniteError
from src.utils.logger import get_application_logger

logger = get_application_logger(__name__)

SYMMETRY_RTOL = 1e-12
JITTER_SCALE = 1e-10


def safe_cholesky(values: np.ndarray, what: str = "matrix") -> np.ndarray:
    """
    Lower Cholesky factor with a single jitter rescue.

    If the first factorization fails, 1e-10 * trace / dim is added to the
    diagonal and the factorization retried once.

    Args:
        values: Square matrix that should be SPD by construction
        what: Name used in log and error messages

    Returns:
        Lower-triangular factor L with L @ L.T == values (+ jitter)

    Raises:
        NotPositiveDefiniteError: Second factorization failed as well
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise DimensionMismatchError(f"{what} must be square, got shape {values.shape}")
    if values.shape[0] == 0:
        return np.zeros((0, 0))
    try:
        return cholesky(values, lower=True, check_finite=True)
    except (LinAlgError, ValueError):
        dim = values.shape[0]
        jitter = JITTER_SCALE * abs(np.trace(values)) / dim
        logger.warning(f"Cholesky of {what} failed, retrying with jitter {jitter:.3e}")
        try:
            return cholesky(values + jitter * np.eye(dim), lower=True, check_finite=True)
        except (LinAlgError, ValueError) as e:
            raise NotPositiveDefiniteError(f"{what} is not positive definite after jitter") from e


def rank_one_update(chol: np.ndarray, x: np.ndarray) -> np.ndarray:
    """
    Lower factor of L L^T + x x^T in O(dim^2).

    Args:
        chol: Lower Cholesky factor L
        x: Update vector

    Returns:
        New lower factor (inputs are not modified)
    """
    L = np.array(chol, dtype=float, copy=True)
    x = np.array(x, dtype=float, copy=True).ravel()
    n = L.shape[0]
    if x.shape[0] != n:
        raise DimensionMismatchError(f"update vector has length {x.shape[0]}, factor has dim {n}")
    for k in range(n):
        r = np.hypot(L[k, k], x[k])
        c = r / L[k, k]
        s = x[k] / L[k, k]
        L[k, k] = r
        if k + 1 < n:
            L[k + 1:, k] = (L[k + 1:, k] + s * x[k + 1:]) / c
            x[k + 1:] = c * x[k + 1:] - s * L[k + 1:, k]
    return L


@dataclass(frozen=True, eq=False)
class SpdMatrix:
    """
    Symmetric positive-definite matrix stored through its lower Cholesky factor.

    `values` is always derived from `chol`, so a matrix rebuilt from a
    stored factor is bit-identical to the original.
    """

    chol: np.ndarray
    _label: str = field(default="matrix", repr=False)

    def __post_init__(self):
        chol = np.asarray(self.chol, dtype=float)
        if chol.ndim != 2 or chol.shape[0] != chol.shape[1]:
            raise DimensionMismatchError(f"Cholesky factor must be square, got {chol.shape}")
        if chol.shape[0] and not np.all(np.diag(chol) > 0):
            raise NotPositiveDefiniteError(f"{self._label} factor has non-positive diagonal")
        chol = np.tril(chol)
        chol.setflags(write=False)
        object.__setattr__(self, "chol", chol)

    @classmethod
    def from_values(cls, values: np.ndarray, what: str = "matrix") -> "SpdMatrix":
        """Factor an SPD matrix after checking symmetry."""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        scale = max(np.max(np.abs(values)) if values.size else 0.0, 1e-300)
        if values.shape[0] != values.shape[1]:
            raise DimensionMismatchError(f"{what} must be square, got shape {values.shape}")
        if np.max(np.abs(values - values.T), initial=0.0) > SYMMETRY_RTOL * scale:
            raise DomainError(f"{what} is not symmetric")
        values = 0.5 * (values + values.T)
        return cls(safe_cholesky(values, what), what)

    @classmethod
    def from_chol(cls, chol: np.ndarray, what: str = "matrix") -> "SpdMatrix":
        return cls(chol, what)

    @classmethod
    def identity(cls, dim: int) -> "SpdMatrix":
        return cls(np.eye(dim))

    @property
    def dim(self) -> int:
        return self.chol.shape[0]

    @cached_property
    def values(self) -> np.ndarray:
        v = self.chol @ self.chol.T
        v = 0.5 * (v + v.T)
        v.setflags(write=False)
        return v

    @cached_property
    def logdet(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self.chol))))

    @cached_property
    def inverse_diagonal(self) -> np.ndarray:
        """Diagonal of the inverse matrix."""
        w = solve_triangular(self.chol, np.eye(self.dim), lower=True)
        return np.sum(w * w, axis=0)

    def inverse(self) -> np.ndarray:
        return cho_solve((self.chol, True), np.eye(self.dim))

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Return M^{-1} b."""
        return cho_solve((self.chol, True), b)

    def whiten(self, b: np.ndarray) -> np.ndarray:
        """Return L^{-1} b."""
        return solve_triangular(self.chol, b, lower=True)

    def inv_quad(self, x: np.ndarray) -> np.ndarray:
        """
        x^T M^{-1} x for a vector, or per-column values for a matrix.
        """
        w = self.whiten(x)
        return np.sum(w * w, axis=0)

    def matmul(self, b: np.ndarray) -> np.ndarray:
        """Return M b without forming M."""
        return self.chol @ (self.chol.T @ b)

    def quad(self, x: np.ndarray) -> np.ndarray:
        """x^T M x for a vector, or per-column values for a matrix."""
        w = self.chol.T @ x
        return np.sum(w * w, axis=0)

    def rank_one_update(self, x: np.ndarray) -> "SpdMatrix":
        """SpdMatrix for M + x x^T."""
        return SpdMatrix(rank_one_update(self.chol, x), self._label)

    def scaled(self, factor: float) -> "SpdMatrix":
        if factor <= 0:
            raise DomainError(f"scale factor must be positive, got {factor}")
        return SpdMatrix(self.chol * np.sqrt(factor), self._label)

    def allclose(self, other: "SpdMatrix", rtol: float = 1e-10, atol: float = 0.0) -> bool:
        return self.dim == other.dim and np.allclose(self.values, other.values, rtol=rtol, atol=atol)

    def same_as(self, other: Optional["SpdMatrix"]) -> bool:
        """Bit-level equality of the stored factors."""
        return other is not None and np.array_equal(self.chol, other.chol)


def determinant_lemma_logdet(base: SpdMatrix, u: np.ndarray, v: np.ndarray) -> float:
    """
    log|A + u v^T| through |A| (1 + v^T A^{-1} u).

    Raises:
        DomainError: The updated determinant is not positive
    """
    factor = 1.0 + float(np.dot(v, base.solve(u)))
    if factor <= 0:
        raise DomainError("rank-one update leaves a non-positive determinant")
    return base.logdet + float(np.log(factor))
