"""
Sequential allocation probabilities for one incoming observation.

The per-component term integrates the likelihood against q(beta_j | Sigma)
and q(Sigma) in closed form, with 1/tau replaced by its variational mean.
"""
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import logsumexp
from scipy.stats import invgamma

from src.model.state import ComponentState, VariationalState
from src.numstat.distributions import InvWishartParams
from src.numstat.linalg import SpdMatrix
from src.numstat.special import log_mvgamma
from src.utils.exceptions import DimensionMismatchError, DomainError


@dataclass(frozen=True, eq=False)
class AllocProbs:
    """
    Soft assignment of observation i.

    probs has length T with zeros outside the candidate set {1..min(i, T)};
    log_marginals and prior_weights cover the candidates only.
    """

    index: int
    probs: np.ndarray
    log_marginals: np.ndarray
    prior_weights: np.ndarray

    @property
    def candidates(self) -> int:
        return self.log_marginals.shape[0]


def conditional_log_evidence(
    y: np.ndarray,
    e: np.ndarray,
    comp: ComponentState,
    sigma: InvWishartParams,
    tau_inv: float,
) -> float:
    """
    log of the closed-form integral over (beta_j, Sigma) at a fixed value of 1/tau.

    Lambda is built from V_j by a rank-one Cholesky update and
    beta_tilde = Lambda^{-1}(tau_inv e y^T + V_j beta_hat).
    """
    y = np.asarray(y, dtype=float).ravel()
    e = np.asarray(e, dtype=float).ravel()
    m = y.shape[0]
    if e.shape[0] != comp.prec.dim or m != sigma.dim:
        raise DimensionMismatchError("observation does not match state dimensions")
    if not tau_inv > 0:
        raise DomainError(f"1/tau must be positive, got {tau_inv}")
    nu = sigma.dof
    S = sigma.scale

    lam = comp.prec.rank_one_update(np.sqrt(tau_inv) * e)
    rhs = tau_inv * np.outer(e, y) + comp.prec.matmul(comp.beta_hat)
    W = lam.whiten(rhs)
    inner = (
        S.values
        + tau_inv * np.outer(y, y)
        + comp.beta_hat.T @ comp.prec.matmul(comp.beta_hat)
        - W.T @ W
    )
    inner = SpdMatrix.from_values(0.5 * (inner + inner.T), "allocation scale")

    # |Omega_j| = 1 / |V_j|
    return float(
        -0.5 * m * np.log(2.0 * np.pi / tau_inv)
        - 0.5 * m * (lam.logdet - comp.prec.logdet)
        + 0.5 * nu * S.logdet
        + log_mvgamma(m, 0.5 * (nu + 1.0))
        - log_mvgamma(m, 0.5 * nu)
        + 0.5 * m * np.log(2.0)
        - 0.5 * (nu + 1.0) * inner.logdet
    )


def component_marginal_loglik(y: np.ndarray, e: np.ndarray, state: VariationalState, j: int) -> float:
    """Plug-in allocation log marginal for component j, with mu = a_tau / b_tau."""
    mu = state.expectations().tau_inv
    return conditional_log_evidence(y, e, state.components[j], state.sigma, mu)


def component_marginal_loglik_quadrature(
    y: np.ndarray,
    e: np.ndarray,
    state: VariationalState,
    j: int,
    nodes: int = 64,
) -> float:
    """
    Allocation log marginal integrated over q(tau) instead of plugged in.

    Gauss-Legendre nodes on (0, 1) are mapped through the inverse CDF of
    q(tau), so the integral becomes an average of the conditional evidence.
    """
    x, w = leggauss(nodes)
    u = 0.5 * (x + 1.0)
    taus = invgamma.ppf(u, state.tau.shape, scale=state.tau.rate)
    comp = state.components[j]
    logs = np.array([conditional_log_evidence(y, e, comp, state.sigma, 1.0 / t) for t in taus])
    return float(logsumexp(logs, b=0.5 * w))


def plugin_gap(y: np.ndarray, e: np.ndarray, state: VariationalState, j: int, nodes: int = 64) -> float:
    """Plug-in minus quadrature log marginal; small when q(tau) is concentrated."""
    return component_marginal_loglik(y, e, state, j) - component_marginal_loglik_quadrature(y, e, state, j, nodes)


def allocation_prior_weights(masses: np.ndarray, seen: int, alpha: float) -> np.ndarray:
    """
    Urn weights r_ij for observation i = seen + 1.

    Components 1..min(i-1, T) get (mass_j + alpha/T) / (alpha + i - 1); while
    i - 1 < T the next index gets alpha (1 - (i-1)/T) / (alpha + i - 1).
    """
    T = masses.shape[0]
    i = seen + 1
    weights = np.zeros(T)
    if i == 1:
        weights[0] = 1.0
        return weights
    k = min(i - 1, T)
    denom = alpha + i - 1
    weights[:k] = (masses[:k] + alpha / T) / denom
    if k < T:
        weights[k] = alpha * (1.0 - k / T) / denom
    return weights


def alloc_probs(y: np.ndarray, e: np.ndarray, state: VariationalState, alpha: float) -> AllocProbs:
    """
    Allocation probabilities of the next observation over the candidate set.

    Args:
        y: m-vector response
        e: Design vector
        state: State after i - 1 observations
        alpha: DP concentration

    Returns:
        AllocProbs normalized in log space
    """
    T = state.trunc
    i = state.seen + 1
    n_cand = min(i, T)
    weights = allocation_prior_weights(state.masses, state.seen, alpha)
    log_marginals = np.array([component_marginal_loglik(y, e, state, j) for j in range(n_cand)])

    probs = np.zeros(T)
    if i == 1:
        probs[0] = 1.0
    else:
        logits = np.log(weights[:n_cand]) + log_marginals
        probs[:n_cand] = np.exp(logits - logsumexp(logits))
        probs /= probs.sum()
    return AllocProbs(index=i, probs=probs, log_marginals=log_marginals, prior_weights=weights[:n_cand])
