"""
Regression-type adjustment: the responses of the k nearest training rows are
carried to a target covariate through their fitted marginal CDF values.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from src.basis.kernel_basis import BasisMap
from src.model.hyperparameters import Hyperparameters
from src.model.state import VariationalState
from src.predictive.mixture import marginal_table
from src.utils.exceptions import DimensionMismatchError, DomainError, InsufficientDataError
from src.utils.logger import get_application_logger

logger = get_application_logger(__name__)

CLAMP = 1e-12
POINT_RULES = ("mean", "median")


@dataclass(frozen=True)
class Neighbors:
    indices: np.ndarray
    distances: np.ndarray


@dataclass(frozen=True, eq=False)
class AdjustedParticles:
    """k adjusted m-vectors with the training rows they came from."""

    particles: np.ndarray
    neighbor_indices: np.ndarray
    distances: np.ndarray

    @property
    def k(self) -> int:
        return self.particles.shape[0]


def knn_search(x_star: np.ndarray, X: np.ndarray, k: int) -> Neighbors:
    """
    Exact k nearest rows of X by Euclidean distance; ties go to the lower index.

    Raises:
        InsufficientDataError: k exceeds the number of rows or is below 1
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    x_star = np.asarray(x_star, dtype=float).ravel()
    n = X.shape[0]
    if not 1 <= k <= n:
        raise InsufficientDataError(f"k = {k} neighbours requested from {n} rows")
    if x_star.shape[0] != X.shape[1]:
        raise DimensionMismatchError(f"target has {x_star.shape[0]} covariates, training rows have {X.shape[1]}")
    distances = cdist(x_star[None, :], X)[0]
    order = np.argsort(distances, kind="stable")[:k]
    return Neighbors(order, distances[order])


@dataclass(frozen=True, eq=False)
class QuantileResiduals:
    """
    Fitted marginal CDF values u_il = F_l(y_il | x_i) of the training rows,
    clamped to [1e-12, 1 - 1e-12]. Computed once and shared by every target.
    """

    u: np.ndarray
    X_std: np.ndarray
    Y: np.ndarray

    @classmethod
    def compute(
        cls,
        X: np.ndarray,
        Y: np.ndarray,
        state: VariationalState,
        basis: BasisMap,
        h: Hyperparameters,
    ) -> "QuantileResiduals":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if X.shape[0] != Y.shape[0]:
            raise DimensionMismatchError(f"{X.shape[0]} covariate rows but {Y.shape[0]} responses")
        table = marginal_table(basis.design(X), state, h)
        u = np.column_stack([table.cdf(l, Y[:, l]) for l in range(Y.shape[1])])
        logger.debug(f"Quantile residuals computed for {X.shape[0]} training rows")
        return cls(np.clip(u, CLAMP, 1.0 - CLAMP), basis.standardizer.apply(X), Y)


def adjust_particles(
    x_star: np.ndarray,
    neighbors: Neighbors,
    residuals: QuantileResiduals,
    state: VariationalState,
    basis: BasisMap,
    h: Hyperparameters,
) -> AdjustedParticles:
    """
    y^a_rl = F_l^{-1}(u_{i_r l} | x*) for each neighbour r and dimension l.

    Args:
        x_star: Raw target covariate vector
        neighbors: Output of knn_search on standardized covariates
        residuals: Training-side CDF values
        state: Fitted state
        basis: Design map of the fit
        h: Hyperparameters

    Returns:
        AdjustedParticles holding one adjusted response per neighbour
    """
    x_star = np.asarray(x_star, dtype=float).ravel()
    table = marginal_table(basis.design(x_star[None, :]), state, h)
    u = residuals.u[neighbors.indices]
    particles = np.column_stack([
        table.quantile(l, u[:, l][None, :])[0] for l in range(u.shape[1])
    ])
    return AdjustedParticles(particles, neighbors.indices, neighbors.distances)


def point_estimate(particles: AdjustedParticles, rule: str = "mean") -> np.ndarray:
    if rule not in POINT_RULES:
        raise DomainError(f"unknown point rule {rule!r}")
    if rule == "median":
        return np.median(particles.particles, axis=0)
    return particles.particles.mean(axis=0)


def predict_adjusted(
    x_star: np.ndarray,
    state: VariationalState,
    basis: BasisMap,
    h: Hyperparameters,
    X: np.ndarray,
    Y: np.ndarray,
    k: int,
    rule: str = "mean",
    residuals: Optional[QuantileResiduals] = None,
) -> np.ndarray:
    """Point prediction from the k adjusted neighbour responses."""
    if residuals is None:
        residuals = QuantileResiduals.compute(X, Y, state, basis, h)
    x_star = np.asarray(x_star, dtype=float).ravel()
    neighbors = knn_search(basis.standardizer.apply(x_star), residuals.X_std, k)
    return point_estimate(adjust_particles(x_star, neighbors, residuals, state, basis, h), rule)


def predict_adjusted_rows(
    X_star: np.ndarray,
    state: VariationalState,
    basis: BasisMap,
    h: Hyperparameters,
    X: np.ndarray,
    Y: np.ndarray,
    k: int,
    rule: str = "mean",
) -> np.ndarray:
    """predict_adjusted for every row of X_star, sharing one QuantileResiduals."""
    residuals = QuantileResiduals.compute(X, Y, state, basis, h)
    X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
    logger.info(f"Adjusting {X_star.shape[0]} targets with k={k}")
    return np.array([
        predict_adjusted(x, state, basis, h, X, Y, k, rule, residuals) for x in X_star
    ])
