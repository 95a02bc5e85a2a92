"""
Prior hyperparameters of the MDP mixture regression and their validation.
"""
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np

from src.numstat.distributions import InvGammaParams, InvWishartParams
from src.numstat.linalg import SpdMatrix
from src.utils.exceptions import InvalidConfigError


@dataclass(frozen=True, eq=False)
class Hyperparameters:
    """
    DP concentration, truncation, basis size and all prior constants.

    Raw numbers are stored so that validate_config can report every
    violation; the typed distribution parameters are built on access.
    """

    alpha: float
    trunc: int
    basis_count: int
    a_tau: float
    b_tau: float
    a_omega: np.ndarray
    b_omega: np.ndarray
    sigma_dof: float
    sigma_scale: np.ndarray
    prior_means: np.ndarray
    prior_precs: np.ndarray
    occupancy_threshold: float = 1e-6

    def __post_init__(self):
        for name in ("a_omega", "b_omega"):
            value = np.asarray(getattr(self, name), dtype=float)
            if value.ndim == 0:
                value = np.full(self.basis_count + 1, float(value))
            object.__setattr__(self, name, value)
        for name in ("sigma_scale", "prior_means", "prior_precs"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def response_dim(self) -> int:
        return int(np.atleast_2d(self.sigma_scale).shape[0])

    @property
    def design_dim(self) -> int:
        return self.basis_count + 1

    @property
    def tau_prior(self) -> InvGammaParams:
        return InvGammaParams(self.a_tau, self.b_tau)

    @property
    def omega_prior(self) -> InvGammaParams:
        return InvGammaParams(self.a_omega.copy(), self.b_omega.copy())

    @property
    def sigma_prior(self) -> InvWishartParams:
        return InvWishartParams(self.sigma_dof, SpdMatrix.from_values(self.sigma_scale, "sigma prior scale"))

    @classmethod
    def defaults(
        cls,
        response_dim: int,
        basis_count: int,
        trunc: int = 10,
        alpha: float = 3.0,
        a_tau: float = 5.0,
        b_tau: float = 0.5,
        a_omega: float = 20.0,
        b_omega: float = 0.5,
        sigma_dof: Optional[float] = None,
        occupancy_threshold: float = 1e-6,
    ) -> "Hyperparameters":
        """
        Default priors: S = I + (1/m) 11^T, nu = m + 1, zero M_j and C_j.
        """
        m = response_dim
        d = basis_count + 1
        return cls(
            alpha=alpha,
            trunc=trunc,
            basis_count=basis_count,
            a_tau=a_tau,
            b_tau=b_tau,
            a_omega=np.full(d, a_omega),
            b_omega=np.full(d, b_omega),
            sigma_dof=float(m + 1) if sigma_dof is None else sigma_dof,
            sigma_scale=np.eye(m) + np.ones((m, m)) / m,
            prior_means=np.zeros((trunc, d, m)),
            prior_precs=np.zeros((trunc, d, d)),
            occupancy_threshold=occupancy_threshold,
        )

    @classmethod
    def from_settings(cls, settings, response_dim: int, basis_count: Optional[int] = None) -> "Hyperparameters":
        return cls.defaults(
            response_dim=response_dim,
            basis_count=settings.basis_count if basis_count is None else basis_count,
            trunc=settings.trunc,
            alpha=settings.alpha,
            a_tau=settings.a_tau,
            b_tau=settings.b_tau,
            a_omega=settings.a_omega,
            b_omega=settings.b_omega,
            sigma_dof=settings.sigma_dof,
            occupancy_threshold=settings.occupancy_threshold,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "trunc": self.trunc,
            "basis_count": self.basis_count,
            "a_tau": self.a_tau,
            "b_tau": self.b_tau,
            "a_omega": self.a_omega.tolist(),
            "b_omega": self.b_omega.tolist(),
            "sigma_dof": self.sigma_dof,
            "sigma_scale": self.sigma_scale.tolist(),
            "prior_means": self.prior_means.tolist(),
            "prior_precs": self.prior_precs.tolist(),
            "occupancy_threshold": self.occupancy_threshold,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Hyperparameters":
        return cls(
            alpha=float(data["alpha"]),
            trunc=int(data["trunc"]),
            basis_count=int(data["basis_count"]),
            a_tau=float(data["a_tau"]),
            b_tau=float(data["b_tau"]),
            a_omega=np.asarray(data["a_omega"], dtype=float),
            b_omega=np.asarray(data["b_omega"], dtype=float),
            sigma_dof=float(data["sigma_dof"]),
            sigma_scale=np.asarray(data["sigma_scale"], dtype=float),
            prior_means=np.asarray(data["prior_means"], dtype=float),
            prior_precs=np.asarray(data["prior_precs"], dtype=float),
            occupancy_threshold=float(data["occupancy_threshold"]),
        )


def _positive(value) -> bool:
    value = np.asarray(value, dtype=float)
    return bool(value.size) and bool(np.all(np.isfinite(value))) and bool(np.all(value > 0))


def validate_config(h: Hyperparameters, m: int) -> List[str]:
    """
    Collect every violated constraint.

    Args:
        h: Hyperparameters to check
        m: Response dimension

    Returns:
        List of messages; empty when the configuration is valid
    """
    errors: List[str] = []
    d = h.basis_count + 1

    if not _positive(h.alpha):
        errors.append(f"alpha must be positive, got {h.alpha}")
    if int(h.trunc) != h.trunc or h.trunc < 1:
        errors.append(f"trunc must be an integer >= 1, got {h.trunc}")
    if int(h.basis_count) != h.basis_count or h.basis_count < 0:
        errors.append(f"basisCount must be an integer >= 0, got {h.basis_count}")
    if not _positive(h.a_tau):
        errors.append(f"tauPrior shape must be positive, got {h.a_tau}")
    if not _positive(h.b_tau):
        errors.append(f"tauPrior rate must be positive, got {h.b_tau}")
    if h.a_omega.shape != (d,) or h.b_omega.shape != (d,):
        errors.append(f"omegaPriors must have {d} entries")
    else:
        if not _positive(h.a_omega):
            errors.append("omegaPriors shapes must be positive")
        if not _positive(h.b_omega):
            errors.append("omegaPriors rates must be positive")

    S = np.atleast_2d(h.sigma_scale)
    if S.shape != (m, m):
        errors.append(f"sigmaPrior scale must be {m}x{m}, got {S.shape}")
    elif not np.allclose(S, S.T, rtol=1e-12, atol=0.0) or not np.all(np.linalg.eigvalsh(S) > 0):
        errors.append("sigmaPrior scale must be symmetric positive definite")
    if not np.isfinite(h.sigma_dof) or not h.sigma_dof > m - 1:
        errors.append(f"sigmaPrior dof too small: {h.sigma_dof} must exceed {m - 1}")

    trunc = int(h.trunc) if h.trunc >= 1 else 0
    if h.prior_means.shape != (trunc, d, m):
        errors.append(f"componentPriorMeans must have shape {(trunc, d, m)}, got {h.prior_means.shape}")
    elif not np.all(np.isfinite(h.prior_means)):
        errors.append("componentPriorMeans must be finite")
    if h.prior_precs.shape != (trunc, d, d):
        errors.append(f"componentPriorPrecs must have shape {(trunc, d, d)}, got {h.prior_precs.shape}")
    else:
        for j, C in enumerate(h.prior_precs):
            if not np.allclose(C, C.T, rtol=1e-12, atol=1e-14):
                errors.append(f"componentPriorPrecs[{j}] is not symmetric")
            elif np.any(np.linalg.eigvalsh(C) < -1e-12 * max(1.0, np.abs(C).max())):
                errors.append(f"componentPriorPrecs[{j}] is not positive semi-definite")

    if not h.occupancy_threshold >= 0:
        errors.append(f"occupancy threshold must be non-negative, got {h.occupancy_threshold}")
    return errors


def require_valid(h: Hyperparameters, m: int) -> None:
    """Raise InvalidConfigError carrying the full violation list."""
    errors = validate_config(h, m)
    if errors:
        raise InvalidConfigError(errors)
