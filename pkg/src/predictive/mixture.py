"""
Posterior predictive distribution at a new covariate.

Each mixture component is a multivariate t obtained by integrating the
likelihood against q(beta_j | Sigma) q(Sigma) with 1/tau replaced by its
variational mean. Marginal CDFs and quantiles feed the regression
adjustment.
"""
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import t as student_t

from src.basis.kernel_basis import BasisMap
from src.model.hyperparameters import Hyperparameters
from src.model.state import ComponentState, VariationalState, prior_component
from src.numstat.distributions import InvWishartParams, mvt_logpdf
from src.numstat.linalg import SpdMatrix, determinant_lemma_logdet
from src.numstat.special import log_mvgamma
from src.utils.exceptions import (
    DegenerateShapeError,
    DimensionMismatchError,
    DomainError,
    ImproperMixtureError,
)
from src.vsugs.allocation import allocation_prior_weights, conditional_log_evidence

BRACKET_WIDTH = 50.0
QUANTILE_TOL = 1e-10
MAX_BISECTIONS = 400


@dataclass(frozen=True, eq=False)
class PredictiveComponent:
    """
    One multivariate t component with the intermediate quantities kept for
    diagnostics: lam = V + mu E0 E0^T, s_star, a_mat and b_vec.
    """

    location: np.ndarray
    shape: SpdMatrix
    tail_exponent: float
    source: ComponentState
    lam: SpdMatrix
    s_star: SpdMatrix
    a_mat: np.ndarray
    b_vec: np.ndarray
    shape_factor: float

    @property
    def dim(self) -> int:
        return self.location.shape[0]

    @property
    def dof(self) -> float:
        return self.tail_exponent - self.dim

    def marginal_scale(self) -> np.ndarray:
        return np.sqrt(self.shape.inverse_diagonal / self.dof)


@dataclass(frozen=True, eq=False)
class PredictiveMixture:
    weights: np.ndarray
    components: Tuple[PredictiveComponent, ...]
    design: np.ndarray
    sigma_scale: SpdMatrix
    sigma_dof: float
    tau_inv: float

    @property
    def response_dim(self) -> int:
        return self.sigma_scale.dim

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)

    def marginals(self) -> "MarginalTable":
        """Single-row MarginalTable for this covariate."""
        loc = np.array([c.location for c in self.components])[None, :, :]
        scale = np.array([c.marginal_scale() for c in self.components])[None, :, :]
        return MarginalTable(self.weights, loc, scale, self.components[0].dof)


def effective_components(state: VariationalState, h: Hyperparameters) -> Tuple[ComponentState, ...]:
    """State components, with unoccupied ones replaced by their prior initialization."""
    return tuple(
        comp if comp.mass > state.occupancy_threshold else prior_component(h, j)
        for j, comp in enumerate(state.components)
    )


def predictive_weights(state: VariationalState, alpha: float) -> np.ndarray:
    """r_{n+1,j} over the candidate set, renormalized to sum to one."""
    weights = allocation_prior_weights(state.masses, state.seen, alpha)
    return weights / weights.sum()


def _component(
    e0: np.ndarray, comp: ComponentState, S: SpdMatrix, nu: float, mu: float, j: int
) -> PredictiveComponent:
    lam = comp.prec.rank_one_update(np.sqrt(mu) * e0)
    VB = comp.prec.matmul(comp.beta_hat)
    W = lam.whiten(VB)
    s_star = S.values + comp.beta_hat.T @ VB - W.T @ W
    s_star = SpdMatrix.from_values(0.5 * (s_star + s_star.T), f"S_star_{j}")

    a = mu * (1.0 - mu * float(lam.inv_quad(e0)))
    b = VB.T @ lam.solve(e0)
    a_mat = a * s_star.inverse()
    b_vec = -2.0 * mu * s_star.solve(b)
    factor = 1.0 - 0.25 * float(b_vec @ np.linalg.solve(a_mat, b_vec))
    if not factor > 0 or not a > 0:
        raise DegenerateShapeError(f"component {j}: shape correction {factor:.3e} is not positive")

    location = -0.5 * np.linalg.solve(a_mat, b_vec)
    # exact completion of the square: s_star - mu^2 b b^T / a = S
    S_inv = S.inverse()
    shape = SpdMatrix.from_values(a * 0.5 * (S_inv + S_inv.T), f"predictive shape {j}")
    return PredictiveComponent(
        location=location,
        shape=shape,
        tail_exponent=nu + 1.0,
        source=comp,
        lam=lam,
        s_star=s_star,
        a_mat=a_mat,
        b_vec=b_vec,
        shape_factor=factor,
    )


def predictive_mixture_design(e0: np.ndarray, state: VariationalState, h: Hyperparameters) -> PredictiveMixture:
    """predictive_mixture on a precomputed design vector."""
    e0 = np.asarray(e0, dtype=float).ravel()
    if e0.shape[0] != state.design_dim:
        raise DimensionMismatchError(f"design vector has {e0.shape[0]} entries, state expects {state.design_dim}")
    mu = state.expectations().tau_inv
    S = state.sigma.scale
    nu = state.sigma.dof
    components = tuple(
        _component(e0, comp, S, nu, mu, j) for j, comp in enumerate(effective_components(state, h))
    )
    return PredictiveMixture(predictive_weights(state, h.alpha), components, e0, S, nu, mu)


def predictive_mixture(
    x0: np.ndarray, state: VariationalState, basis: BasisMap, h: Hyperparameters
) -> PredictiveMixture:
    """
    Predictive mixture of multivariate t densities at a raw covariate vector.

    Args:
        x0: p-vector of raw covariates
        state: Fitted variational state
        basis: Design map the state was fitted with
        h: Hyperparameters (alpha and the prior components)

    Returns:
        PredictiveMixture with T components and renormalized weights

    Raises:
        DegenerateShapeError: A component's shape correction is not positive
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    return predictive_mixture_design(basis.design(x0[None, :])[0], state, h)


def predictive_logpdf(y0: np.ndarray, mix: PredictiveMixture):
    """log sum_j w_j t_j(y0); rows of a 2-D y0 are evaluated independently."""
    y0 = np.asarray(y0, dtype=float)
    active = mix.active
    logs = np.array([
        np.log(mix.weights[j])
        + mvt_logpdf(y0, mix.components[j].location, mix.components[j].shape, mix.components[j].tail_exponent)
        for j in active
    ])
    out = logsumexp(logs, axis=0)
    return float(out) if y0.ndim == 1 else out


def predictive_mean(mix: PredictiveMixture) -> np.ndarray:
    """
    Raises:
        ImproperMixtureError: Some active component has dof <= 1
    """
    active = mix.active
    for j in active:
        if not mix.components[j].dof > 1:
            raise ImproperMixtureError(f"component {j} has dof {mix.components[j].dof}, mean undefined")
    return np.sum([mix.weights[j] * mix.components[j].location for j in active], axis=0)


def variance_diagnostic(mix: PredictiveMixture, j: int) -> np.ndarray:
    """Component covariance in the form shape^{-1} / (nu - m - 1)."""
    comp = mix.components[j]
    denom = mix.sigma_dof - comp.dim - 1.0
    if not denom > 0:
        raise ImproperMixtureError(f"component {j}: variance needs nu > m + 1, got nu = {mix.sigma_dof}")
    return comp.shape.inverse() / denom


def determinant_routes(y0: np.ndarray, mix: PredictiveMixture, j: int) -> Dict[str, float]:
    """
    Component log density by three routes: the direct determinant of the
    un-simplified scale, the determinant lemma on S and the t density form.
    """
    y0 = np.asarray(y0, dtype=float).ravel()
    comp = mix.components[j]
    m = comp.dim
    nu = mix.sigma_dof
    mu = mix.tau_inv
    S = mix.sigma_scale
    direct = conditional_log_evidence(y0, mix.design, comp.source, InvWishartParams(nu, S), mu)

    a = mu * (1.0 - mu * float(comp.lam.inv_quad(mix.design)))
    d = y0 - comp.location
    inner_logdet = determinant_lemma_logdet(S, a * d, d)
    lemma = (
        -0.5 * m * np.log(2.0 * np.pi / mu)
        - 0.5 * m * (comp.lam.logdet - comp.source.prec.logdet)
        + 0.5 * nu * S.logdet
        + log_mvgamma(m, 0.5 * (nu + 1.0))
        - log_mvgamma(m, 0.5 * nu)
        + 0.5 * m * np.log(2.0)
        - 0.5 * (nu + 1.0) * inner_logdet
    )
    t_form = mvt_logpdf(y0, comp.location, comp.shape, comp.tail_exponent)
    return {"direct": float(direct), "lemma": float(lemma), "t_density": float(t_form)}


@dataclass(frozen=True, eq=False)
class MarginalTable:
    """
    Univariate t marginals for n covariate rows.

    location and scale are (n, T, m); every component shares one dof.
    """

    weights: np.ndarray
    location: np.ndarray
    scale: np.ndarray
    dof: float

    @property
    def n(self) -> int:
        return self.location.shape[0]

    def _check_dim(self, dim: int) -> None:
        if not 0 <= dim < self.location.shape[2]:
            raise DimensionMismatchError(f"response dimension {dim} out of range")

    def cdf(self, dim: int, values: np.ndarray) -> np.ndarray:
        """
        Mixture CDF of dimension `dim`.

        values is (n,) for one value per row or (n, k); the result has the
        same shape.
        """
        self._check_dim(dim)
        values = np.asarray(values, dtype=float)
        flat = values.ndim == 1
        v = values[:, None] if flat else values
        active = np.flatnonzero(self.weights > 0)
        loc = self.location[:, active, dim][:, None, :]
        scale = self.scale[:, active, dim][:, None, :]
        z = (v[:, :, None] - loc) / scale
        out = np.clip(student_t.cdf(z, self.dof) @ self.weights[active], 0.0, 1.0)
        return out[:, 0] if flat else out

    def center(self, dim: int) -> np.ndarray:
        active = np.flatnonzero(self.weights > 0)
        w = self.weights[active] / self.weights[active].sum()
        return self.location[:, active, dim] @ w

    def width(self, dim: int) -> np.ndarray:
        active = np.flatnonzero(self.weights > 0)
        return self.scale[:, active, dim].max(axis=1)

    def quantile(self, dim: int, u: np.ndarray) -> np.ndarray:
        """
        Inverse of cdf by bracketed bisection to |F(q) - u| < 1e-10.

        Raises:
            DomainError: Some u lies outside (0, 1)
        """
        self._check_dim(dim)
        u = np.asarray(u, dtype=float)
        flat = u.ndim == 1
        target = u[:, None] if flat else u
        if np.any(~(target > 0)) or np.any(~(target < 1)):
            raise DomainError("quantile levels must lie strictly inside (0, 1)")

        center = np.broadcast_to(self.center(dim)[:, None], target.shape)
        step = np.broadcast_to(BRACKET_WIDTH * self.width(dim)[:, None], target.shape).copy()
        lo = center - step
        hi = center + step
        for _ in range(200):
            low_bad = self.cdf(dim, lo) > target
            high_bad = self.cdf(dim, hi) < target
            if not (low_bad.any() or high_bad.any()):
                break
            step = np.where(low_bad | high_bad, 2.0 * step, step)
            lo = np.where(low_bad, center - step, lo)
            hi = np.where(high_bad, center + step, hi)

        mid = 0.5 * (lo + hi)
        for _ in range(MAX_BISECTIONS):
            mid = 0.5 * (lo + hi)
            F = self.cdf(dim, mid)
            done = np.abs(F - target) < QUANTILE_TOL
            if done.all():
                break
            below = F < target
            lo = np.where(done, mid, np.where(below, mid, lo))
            hi = np.where(done, mid, np.where(below, hi, mid))
            if np.all(hi - lo <= 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(mid))):
                break
        return mid[:, 0] if flat else mid


def marginal_table(
    E: np.ndarray, state: VariationalState, h: Hyperparameters, weights: Optional[np.ndarray] = None
) -> MarginalTable:
    """
    Marginal parameters for many design rows at once.

    With h_i = E_i^T V_j^{-1} E_i, the component's quadratic-form matrix is
    a_i S^{-1} with a_i = mu / (1 + mu h_i), so dimension l has scale
    sqrt(S_ll / (a_i dof)).
    """
    E = np.atleast_2d(np.asarray(E, dtype=float))
    if E.shape[1] != state.design_dim:
        raise DimensionMismatchError(f"design rows have {E.shape[1]} columns, state expects {state.design_dim}")
    mu = state.expectations().tau_inv
    m = state.response_dim
    dof = state.sigma.dof + 1.0 - m
    S_diag = np.diag(state.sigma.scale.values)
    comps = effective_components(state, h)
    location = np.stack([E @ c.beta_hat for c in comps], axis=1)
    leverage = np.stack([c.prec.inv_quad(E.T) for c in comps], axis=1)
    a = mu / (1.0 + mu * leverage)
    scale = np.sqrt(S_diag[None, None, :] / (a[:, :, None] * dof))
    if weights is None:
        weights = predictive_weights(state, h.alpha)
    return MarginalTable(np.asarray(weights, dtype=float), location, scale, dof)


def marginal_cdf(mix: PredictiveMixture, dim: int, v) -> np.ndarray:
    """Mixture CDF of one response dimension at scalar or array v."""
    v = np.asarray(v, dtype=float)
    out = mix.marginals().cdf(dim, v.reshape(1, -1))[0]
    return float(out[0]) if v.ndim == 0 else out.reshape(v.shape)


def marginal_quantile(mix: PredictiveMixture, dim: int, u) -> np.ndarray:
    """Quantile of one response dimension at scalar or array u in (0, 1)."""
    u = np.asarray(u, dtype=float)
    out = mix.marginals().quantile(dim, u.reshape(1, -1))[0]
    return float(out[0]) if u.ndim == 0 else out.reshape(u.shape)
