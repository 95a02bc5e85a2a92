"""
Expected log-likelihood of observations under one mixture component.

Shared by the batch allocation update and the recursive lower bound.
"""
import numpy as np

from src.model.state import ComponentState, Expectations
from src.numstat.distributions import LOG_2PI, InvGammaParams, InvWishartParams


def expected_log_likelihood(
    Y: np.ndarray,
    E: np.ndarray,
    component: ComponentState,
    tau: InvGammaParams,
    sigma: InvWishartParams,
) -> np.ndarray:
    """
    E_q log p(y_i | beta_j^T E_i, tau Sigma) for each row i.

    Args:
        Y: n x m responses (or one m-vector)
        E: n x (N+1) designs (or one design vector)
        component: Variational factor of beta_j
        tau: q(tau)
        sigma: q(Sigma)

    Returns:
        Length-n vector (scalar for vector inputs)
    """
    single = np.ndim(Y) == 1
    Y = np.atleast_2d(Y)
    E = np.atleast_2d(E)
    m = Y.shape[1]
    ex = Expectations.from_factors(tau, sigma)

    resid = Y - E @ component.beta_hat
    resid_quad = np.einsum("ik,kl,il->i", resid, ex.sigma_inv, resid)
    leverage = component.prec.inv_quad(E.T)

    out = (
        -0.5 * m * LOG_2PI
        - 0.5 * m * ex.log_tau
        - 0.5 * ex.log_det_sigma
        - 0.5 * ex.tau_inv * (resid_quad + m * leverage)
    )
    return float(out[0]) if single else out
