"""
Recursive variational lower bound for one assimilation step.

Reported as a diagnostic time series only; the plug-in allocation makes the
bound non-monotone, so nothing is optimized against it.
"""
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np
from scipy.special import digamma, gammaln

from src.model.expectations import expected_log_likelihood
from src.model.state import ComponentState, VariationalState
from src.numstat.distributions import LOG_2PI, InvWishartParams
from src.numstat.special import log_mvgamma


@dataclass(frozen=True)
class BoundBreakdown:
    tau_term: float
    sigma_term: float
    omega_terms: np.ndarray
    beta_terms: np.ndarray
    likelihood_term: float
    alloc_prior_term: float
    entropy_term: float

    @property
    def total(self) -> float:
        return float(
            self.tau_term
            + self.sigma_term
            + np.sum(self.omega_terms)
            + np.sum(self.beta_terms)
            + self.likelihood_term
            + self.alloc_prior_term
            + self.entropy_term
        )

    def to_row(self, step: int) -> Dict[str, Any]:
        return {
            "step": step,
            "total": self.total,
            "tau_term": self.tau_term,
            "sigma_term": self.sigma_term,
            "omega_terms": float(np.sum(self.omega_terms)),
            "beta_terms": float(np.sum(self.beta_terms)),
            "likelihood_term": self.likelihood_term,
            "alloc_prior_term": self.alloc_prior_term,
            "entropy_term": self.entropy_term,
        }


def inverse_gamma_difference(a_prev, b_prev, a_new, b_new):
    """E_new log IG(a_prev, b_prev) - E_new log IG(a_new, b_new); elementwise on arrays."""
    a_prev, b_prev = np.asarray(a_prev, dtype=float), np.asarray(b_prev, dtype=float)
    a_new, b_new = np.asarray(a_new, dtype=float), np.asarray(b_new, dtype=float)
    return (
        (a_new - a_prev) * digamma(a_new)
        - gammaln(a_new)
        + gammaln(a_prev)
        + a_prev * (np.log(b_prev) - np.log(b_new))
        + a_new * (b_new - b_prev) / b_new
    )


def _inverse_wishart_expectation(param: InvWishartParams, current: InvWishartParams) -> float:
    """E under `current` of log IW(param)."""
    m = param.dim
    nu = param.dof
    trace = float(np.sum(current.expected_inverse() * param.scale.values))
    return (
        0.5 * nu * param.scale.logdet
        - 0.5 * nu * m * np.log(2.0)
        - log_mvgamma(m, 0.5 * nu)
        - 0.5 * trace
        - 0.5 * (nu + m + 1.0) * current.expected_log_det()
    )


def _beta_expectation(
    param: ComponentState, current: ComponentState, sigma: InvWishartParams
) -> float:
    """E under the current factors of log q(beta_j) with parameters `param`."""
    d, m = current.beta_hat.shape
    D = current.beta_hat - param.beta_hat
    quad = float(np.sum(sigma.expected_inverse() * (D.T @ param.prec.matmul(D))))
    spread = m * float(np.trace(current.prec.solve(param.prec.values)))
    return (
        -0.5 * d * m * LOG_2PI
        - 0.5 * d * sigma.expected_log_det()
        + 0.5 * m * param.prec.logdet
        - 0.5 * (quad + spread)
    )


def step_lower_bound(
    y: np.ndarray,
    e: np.ndarray,
    state_prev: VariationalState,
    state_new: VariationalState,
    alloc,
) -> BoundBreakdown:
    """
    Bound contribution of observation i.

    Args:
        y: m-vector response
        e: Design vector
        state_prev: State after i - 1 observations
        state_new: State after i observations
        alloc: AllocProbs used for the step (probs and prior weights)

    Returns:
        BoundBreakdown whose total is the sum of its parts
    """
    q = np.asarray(alloc.probs, dtype=float)
    sigma = state_new.sigma

    tau_term = float(inverse_gamma_difference(
        state_prev.tau.shape, state_prev.tau.rate, state_new.tau.shape, state_new.tau.rate
    ))
    omega_terms = inverse_gamma_difference(
        state_prev.omegas.shape, state_prev.omegas.rate, state_new.omegas.shape, state_new.omegas.rate
    )
    sigma_term = _inverse_wishart_expectation(state_prev.sigma, sigma) - _inverse_wishart_expectation(sigma, sigma)
    beta_terms = np.array([
        _beta_expectation(prev, new, sigma) - _beta_expectation(new, new, sigma)
        for prev, new in zip(state_prev.components, state_new.components)
    ])

    likelihood = 0.0
    for q_j, comp in zip(q, state_new.components):
        if q_j > 0:
            likelihood += q_j * expected_log_likelihood(y, e, comp, state_new.tau, sigma)

    positive = q > 0
    n_cand = len(alloc.prior_weights)
    weights = np.asarray(alloc.prior_weights, dtype=float)
    cand = q[:n_cand]
    alloc_prior = float(np.sum(cand[cand > 0] * np.log(weights[cand > 0])))
    entropy = float(-np.sum(q[positive] * np.log(q[positive])))

    return BoundBreakdown(
        tau_term=tau_term,
        sigma_term=float(sigma_term),
        omega_terms=np.asarray(omega_terms, dtype=float),
        beta_terms=beta_terms,
        likelihood_term=float(likelihood),
        alloc_prior_term=alloc_prior,
        entropy_term=entropy,
    )
