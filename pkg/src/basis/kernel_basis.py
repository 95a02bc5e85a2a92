"""
Kernel basis expansion x -> E = (1, K(x, x_1), ..., K(x, x_N)).

Covariates are standardized against the training set, centers are a seeded
subsample of training rows and the bandwidth is the mean pairwise distance
over a random subsample.
"""
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np
from scipy.spatial.distance import cdist, pdist

from src.utils.exceptions import (
    ConstantColumnError,
    DegenerateBandwidthError,
    DimensionMismatchError,
    DomainError,
    InsufficientDataError,
)
from src.utils.logger import get_application_logger

logger = get_application_logger(__name__)

KERNELS = ("literal", "gaussian-sq")
BANDWIDTH_MODES = ("mean", "mean-sq")
ALL_PAIRS_LIMIT = 2000
RANDOM_PAIR_COUNT = 5000


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-covariate (mean, sd) fitted on training data."""

    mean: np.ndarray
    sd: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.dim:
            raise DimensionMismatchError(f"expected {self.dim} covariates, got {X.shape[-1]}")
        return (X - self.mean) / self.sd

    def to_dict(self) -> Dict[str, Any]:
        return {"mean": self.mean.tolist(), "sd": self.sd.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Standardizer":
        return cls(np.asarray(data["mean"], dtype=float), np.asarray(data["sd"], dtype=float))


def fit_standardizer(X: np.ndarray) -> Standardizer:
    """
    Fit population-convention (divide by n) standardization statistics.

    Raises:
        InsufficientDataError: Fewer than two rows
        ConstantColumnError: A column has zero standard deviation
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] < 2:
        raise InsufficientDataError(f"standardization needs at least 2 rows, got {X.shape[0]}")
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    constant = np.flatnonzero(~(sd > 0))
    if constant.size:
        raise ConstantColumnError(f"constant covariate column(s): {constant.tolist()}")
    return Standardizer(mean, sd)


def select_centers(X: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Pick `count` distinct rows of X without replacement, in sampled order."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if count < 0 or count > n:
        raise InsufficientDataError(f"cannot select {count} centers from {n} rows")
    idx = rng.choice(n, size=count, replace=False)
    return X[idx].copy()


def estimate_bandwidth(
    X: np.ndarray,
    rng: np.random.Generator,
    subsample_size: int = 5000,
    mode: str = "mean",
) -> float:
    """
    Mean pairwise Euclidean distance over a random subsample.

    Uses every pair of the subsample when it holds at most 2000 points and
    5000 random distinct pairs otherwise. mode="mean-sq" averages squared
    distances instead.

    Returns:
        kappa^2 > 0
    """
    if mode not in BANDWIDTH_MODES:
        raise DomainError(f"unknown bandwidth mode {mode!r}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if n < 2:
        raise InsufficientDataError(f"bandwidth needs at least 2 points, got {n}")

    size = min(subsample_size, n)
    sub = X if size == n else X[rng.choice(n, size=size, replace=False)]

    if size <= ALL_PAIRS_LIMIT:
        distances = pdist(sub)
    else:
        i = rng.integers(0, size, RANDOM_PAIR_COUNT)
        j = rng.integers(0, size - 1, RANDOM_PAIR_COUNT)
        j = j + (j >= i)
        distances = np.linalg.norm(sub[i] - sub[j], axis=1)

    if mode == "mean-sq":
        distances = distances ** 2
    kappa_sq = float(np.mean(distances))
    if not kappa_sq > 0:
        raise DegenerateBandwidthError("degenerate bandwidth: all sampled points coincide")
    return kappa_sq


@dataclass(frozen=True, eq=False)
class BasisMap:
    """Fixed design map; immutable after fitting."""

    centers: np.ndarray
    kappa_sq: float
    standardizer: Standardizer
    kernel: str = "literal"

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float).reshape(-1, self.standardizer.dim)
        object.__setattr__(self, "centers", centers)
        if not self.kappa_sq > 0:
            raise DegenerateBandwidthError(f"bandwidth must be positive, got {self.kappa_sq}")
        if self.kernel not in KERNELS:
            raise DomainError(f"unknown kernel {self.kernel!r}")

    @property
    def count(self) -> int:
        return self.centers.shape[0]

    @property
    def design_dim(self) -> int:
        return self.count + 1

    @property
    def covariate_dim(self) -> int:
        return self.standardizer.dim

    def kernel_values(self, distances: np.ndarray) -> np.ndarray:
        if self.kernel == "gaussian-sq":
            return np.exp(-(distances ** 2) / (2.0 * self.kappa_sq))
        return np.exp(-distances / (2.0 * self.kappa_sq))

    def design(self, X: np.ndarray, standardized: bool = False) -> np.ndarray:
        """
        Design matrix with one row E_i per covariate row.

        Args:
            X: n x p covariates (raw unless `standardized`)
            standardized: Skip the standardization step

        Returns:
            n x (N+1) matrix with a leading column of ones
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Xs = X if standardized else self.standardizer.apply(X)
        if Xs.shape[1] != self.covariate_dim:
            raise DimensionMismatchError(f"expected {self.covariate_dim} covariates, got {Xs.shape[1]}")
        E = np.ones((Xs.shape[0], self.design_dim))
        if self.count:
            E[:, 1:] = self.kernel_values(cdist(Xs, self.centers))
        return E

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kernel": self.kernel,
            "kappa_sq": self.kappa_sq,
            "centers": {
                "rows": int(self.centers.shape[0]),
                "cols": int(self.centers.shape[1]),
                "values": self.centers.ravel().tolist(),
            },
            "standardizer": self.standardizer.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BasisMap":
        standardizer = Standardizer.from_dict(data["standardizer"])
        block = data["centers"]
        values = np.asarray(block["values"], dtype=float)
        if values.size != block["rows"] * block["cols"] or block["cols"] != standardizer.dim:
            raise DimensionMismatchError("basis centers disagree with declared dimensions")
        centers = values.reshape(block["rows"], block["cols"])
        return cls(centers, float(data["kappa_sq"]), standardizer, data["kernel"])


def expand(x: np.ndarray, basis: BasisMap) -> np.ndarray:
    """Design vector E for one standardized covariate vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatchError(f"expand takes a single p-vector, got shape {x.shape}")
    return basis.design(x[None, :], standardized=True)[0]


def build_basis(
    X: np.ndarray,
    basis_count: int,
    rng: np.random.Generator,
    kernel: str = "literal",
    bandwidth_mode: str = "mean",
    subsample_size: int = 5000,
    kappa_sq: Optional[float] = None,
) -> BasisMap:
    """
    Fit standardizer, centers and bandwidth on raw training covariates.

    Args:
        X: n x p raw training covariates
        basis_count: Number of kernel centers N
        rng: Seeded generator used for centers then bandwidth subsampling
        kernel: "literal" (unsquared norm) or "gaussian-sq"
        bandwidth_mode: "mean" or "mean-sq"
        subsample_size: Bandwidth subsample size
        kappa_sq: Fixed bandwidth, skipping estimation

    Returns:
        Fitted BasisMap
    """
    standardizer = fit_standardizer(X)
    Xs = standardizer.apply(X)
    centers = select_centers(Xs, basis_count, rng)
    if kappa_sq is None:
        kappa_sq = estimate_bandwidth(Xs, rng, subsample_size, bandwidth_mode) if basis_count else 1.0
    basis = BasisMap(centers, kappa_sq, standardizer, kernel)
    logger.info(f"Built kernel basis: N={basis.count}, kappa_sq={kappa_sq:.6g}, kernel={kernel}")
    return basis
