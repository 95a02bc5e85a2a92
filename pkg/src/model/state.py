"""
Variational state shared by the batch and online fitters.
"""
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from src.model.hyperparameters import Hyperparameters, require_valid
from src.numstat.distributions import InvGammaParams, InvWishartParams
from src.numstat.linalg import SpdMatrix
from src.utils.exceptions import DimensionMismatchError, DomainError


@dataclass(frozen=True, eq=False)
class ComponentState:
    """q(beta_j | Sigma) = N(beta_hat, prec^{-1} (x) Sigma) plus accumulated mass."""

    beta_hat: np.ndarray
    prec: SpdMatrix
    mass: float = 0.0

    def __post_init__(self):
        beta_hat = np.atleast_2d(np.asarray(self.beta_hat, dtype=float))
        if beta_hat.shape[0] != self.prec.dim:
            raise DimensionMismatchError(f"beta_hat has {beta_hat.shape[0]} rows, precision dim {self.prec.dim}")
        if not self.mass >= 0:
            raise DomainError(f"component mass must be non-negative, got {self.mass}")
        object.__setattr__(self, "beta_hat", beta_hat)


@dataclass(frozen=True, eq=False)
class SufficientStats:
    """Allocation-weighted sums for one component: sum q E E^T, sum q E y^T, sum q y y^T."""

    ee: np.ndarray
    ey: np.ndarray
    yy: np.ndarray

    @classmethod
    def zeros(cls, design_dim: int, response_dim: int) -> "SufficientStats":
        return cls(
            np.zeros((design_dim, design_dim)),
            np.zeros((design_dim, response_dim)),
            np.zeros((response_dim, response_dim)),
        )

    def add(self, weight: float, e: np.ndarray, y: np.ndarray) -> "SufficientStats":
        return SufficientStats(
            self.ee + weight * np.outer(e, e),
            self.ey + weight * np.outer(e, y),
            self.yy + weight * np.outer(y, y),
        )


@dataclass(frozen=True)
class Expectations:
    """Variational moments used by every update."""

    tau_inv: float
    log_tau: float
    sigma_inv: np.ndarray
    log_det_sigma: float
    omega_inv: Optional[np.ndarray] = None

    @classmethod
    def from_factors(
        cls, tau: InvGammaParams, sigma: InvWishartParams, omegas: Optional[InvGammaParams] = None
    ) -> "Expectations":
        return cls(
            tau_inv=float(tau.expected_inverse()),
            log_tau=float(tau.expected_log()),
            sigma_inv=sigma.expected_inverse(),
            log_det_sigma=sigma.expected_log_det(),
            omega_inv=None if omegas is None else np.asarray(omegas.expected_inverse(), dtype=float),
        )


@dataclass(frozen=True, eq=False)
class VariationalState:
    """
    Global and per-component variational factors after `seen` observations.
    """

    components: Tuple[ComponentState, ...]
    sigma: InvWishartParams
    tau: InvGammaParams
    omegas: InvGammaParams
    seen: int = 0
    occupancy_threshold: float = 1e-6
    suff_stats: Optional[Tuple[SufficientStats, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if self.suff_stats is not None:
            object.__setattr__(self, "suff_stats", tuple(self.suff_stats))
        if self.seen < 0:
            raise DomainError(f"seen must be non-negative, got {self.seen}")
        dims = {c.prec.dim for c in self.components}
        if len(dims) != 1:
            raise DimensionMismatchError("components have inconsistent design dimensions")
        if np.shape(self.omegas.shape) != (self.design_dim,):
            raise DimensionMismatchError(f"omegas must have {self.design_dim} entries")
        if any(c.beta_hat.shape[1] != self.sigma.dim for c in self.components):
            raise DimensionMismatchError("beta_hat columns disagree with sigma dimension")

    @property
    def trunc(self) -> int:
        return len(self.components)

    @property
    def design_dim(self) -> int:
        return self.components[0].prec.dim

    @property
    def response_dim(self) -> int:
        return self.sigma.dim

    @property
    def masses(self) -> np.ndarray:
        return np.array([c.mass for c in self.components])

    @property
    def occupied(self) -> int:
        return int(np.sum(self.masses > self.occupancy_threshold))

    def expectations(self) -> Expectations:
        """The single accessor for E_q(1/tau), E_q(Sigma^{-1}) and E_q(Omega^{-1})."""
        return Expectations.from_factors(self.tau, self.sigma, self.omegas)

    def replace(self, **changes) -> "VariationalState":
        return replace(self, **changes)


def prior_component(h: Hyperparameters, j: int) -> ComponentState:
    """Component j as initialized from the prior: V = diag(a/b) + C_j, beta_hat = M_j."""
    prec = SpdMatrix.from_values(np.diag(h.a_omega / h.b_omega) + h.prior_precs[j], f"V_{j}")
    return ComponentState(h.prior_means[j].copy(), prec, 0.0)


def init_state(h: Hyperparameters, track_suff_stats: bool = False) -> VariationalState:
    """
    Initial variational state from the priors.

    Raises:
        InvalidConfigError: Hyperparameters violate a constraint
    """
    m = h.response_dim
    require_valid(h, m)
    components = tuple(prior_component(h, j) for j in range(h.trunc))
    suff = None
    if track_suff_stats:
        suff = tuple(SufficientStats.zeros(h.design_dim, m) for _ in range(h.trunc))
    return VariationalState(
        components=components,
        sigma=h.sigma_prior,
        tau=h.tau_prior,
        omegas=h.omega_prior,
        seen=0,
        occupancy_threshold=h.occupancy_threshold,
        suff_stats=suff,
    )


@dataclass(frozen=True, eq=False)
class AllocationTable:
    """Batch soft assignments q_ij = q(delta_i = j); rows sum to one."""

    q: np.ndarray

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.q, dtype=float))
        if q.size and not np.allclose(q.sum(axis=1), 1.0, rtol=0.0, atol=1e-10):
            raise DomainError("allocation rows must sum to one")
        object.__setattr__(self, "q", q)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def masses(self) -> np.ndarray:
        return self.q.sum(axis=0)
