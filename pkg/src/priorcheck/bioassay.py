"""
Bioassay demonstration: four dose groups of five animals, logistic dose
response with independent normal priors on intercept and slope.

The summary statistic is the pair of fitted response probabilities at the
second and third doses, evaluated at the penalized posterior mode.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import expit

from src.utils.exceptions import DimensionMismatchError, DomainError, NonConvergenceError
from src.utils.logger import get_application_logger

logger = get_application_logger(__name__)

LOG_DOSES = np.array([-0.86, -0.30, -0.05, 0.73])
DOSE_SD = 0.5
STAT_DOSES = (1, 2)
TRANSFORMS = ("printed", "conventional")
GRAD_TOL = 1e-10
MAX_NEWTON = 100
MAX_HALVINGS = 60


def standardized_doses() -> np.ndarray:
    """Log-doses centred and scaled to standard deviation 0.5 (ddof=1)."""
    centred = LOG_DOSES - LOG_DOSES.mean()
    return DOSE_SD * centred / centred.std(ddof=1)


DOSES = standardized_doses()


def _log_posterior(c: np.ndarray, y: np.ndarray, trials: int, prior_sd: float, x: np.ndarray) -> np.ndarray:
    eta = c[:, :1] + c[:, 1:] * x[None, :]
    # log(1 + e^eta) without overflow
    softplus = np.maximum(eta, 0.0) + np.log1p(np.exp(-np.abs(eta)))
    return np.sum(y * eta - trials * softplus, axis=1) - np.sum(c * c, axis=1) / (2.0 * prior_sd ** 2)


def _gradient_hessian(
    c: np.ndarray, y: np.ndarray, trials: int, prior_sd: float, x: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    eta = c[:, :1] + c[:, 1:] * x[None, :]
    p = expit(eta)
    resid = y - trials * p
    prec = 1.0 / prior_sd ** 2
    g = np.stack([resid.sum(axis=1), (resid * x).sum(axis=1)], axis=1) - prec * c
    w = trials * p * (1.0 - p)
    H = np.empty((c.shape[0], 2, 2))
    H[:, 0, 0] = -w.sum(axis=1) - prec
    H[:, 0, 1] = H[:, 1, 0] = -(w * x).sum(axis=1)
    H[:, 1, 1] = -(w * x * x).sum(axis=1) - prec
    return g, H


def posterior_gradient(c: np.ndarray, y: np.ndarray, trials: int = 5, prior_sd: float = 10.0) -> np.ndarray:
    """Gradient of the penalized log posterior at (c0, c1)."""
    c = np.atleast_2d(np.asarray(c, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    g, _ = _gradient_hessian(c, y, trials, prior_sd, DOSES)
    return g[0] if g.shape[0] == 1 else g


def bioassay_posterior_mode_batch(Y: np.ndarray, trials: int = 5, prior_sd: float = 10.0) -> np.ndarray:
    """
    Posterior modes for many count vectors at once by damped Newton iteration.

    Args:
        Y: B x 4 success counts
        trials: Animals per dose group
        prior_sd: Prior standard deviation of both coefficients

    Returns:
        B x 2 array of (c0, c1)

    Raises:
        NonConvergenceError: Some gradient is still above 1e-10 after 100 steps
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[1] != DOSES.shape[0]:
        raise DimensionMismatchError(f"expected {DOSES.shape[0]} dose groups, got {Y.shape[1]}")
    if trials < 0 or not prior_sd > 0:
        raise DomainError("trials must be non-negative and prior_sd positive")
    x = DOSES
    c = np.zeros((Y.shape[0], 2))
    active = np.ones(Y.shape[0], dtype=bool)

    for _ in range(MAX_NEWTON + 1):
        g, H = _gradient_hessian(c[active], Y[active], trials, prior_sd, x)
        done = np.max(np.abs(g), axis=1) < GRAD_TOL
        idx = np.flatnonzero(active)
        active[idx[done]] = False
        if not active.any():
            break
        idx = idx[~done]
        step = np.linalg.solve(-H[~done], g[~done][:, :, None])[:, :, 0]
        current = c[idx]
        base = _log_posterior(current, Y[idx], trials, prior_sd, x)
        scale = np.ones(idx.shape[0])
        pending = np.ones(idx.shape[0], dtype=bool)
        for _ in range(MAX_HALVINGS):
            trial = current + scale[:, None] * step
            value = _log_posterior(trial, Y[idx], trials, prior_sd, x)
            ok = value >= base - 1e-12 * (1.0 + np.abs(base))
            pending &= ~ok
            if not pending.any():
                break
            scale = np.where(pending, 0.5 * scale, scale)
        c[idx] = current + scale[:, None] * step
    else:
        raise NonConvergenceError(f"Newton iteration did not converge for {int(active.sum())} data set(s)")
    return c


def bioassay_posterior_mode(y: np.ndarray, trials: int = 5, prior_sd: float = 10.0) -> np.ndarray:
    """Posterior mode (c0, c1) for one vector of four success counts."""
    return bioassay_posterior_mode_batch(np.asarray(y, dtype=float)[None, :], trials, prior_sd)[0]


def fitted_probabilities(modes: np.ndarray, transform: str = "printed") -> np.ndarray:
    """
    (p2, p3) for each mode.

    "printed" uses 1 / (1 + exp(-c0 + c1 x)); "conventional" uses the model's
    own logit, 1 / (1 + exp(-(c0 + c1 x))).
    """
    if transform not in TRANSFORMS:
        raise DomainError(f"unknown transform {transform!r}")
    modes = np.atleast_2d(modes)
    x = DOSES[list(STAT_DOSES)]
    sign = -1.0 if transform == "printed" else 1.0
    return expit(modes[:, :1] + sign * modes[:, 1:] * x[None, :])


@dataclass(frozen=True)
class BioassaySimulator:
    """Callable lam -> statistics sample for prior (sigma0, sigma1) = lam."""

    trials: int = 5
    prior_sd: float = 10.0
    transform: str = "printed"

    def __call__(self, lam: np.ndarray, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        lam = np.broadcast_to(np.asarray(lam, dtype=float), (size, 2))
        return self.simulate_rows(lam, rng)

    def simulate_rows(self, lams: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One statistic per row of lams, each row a (sigma0, sigma1) pair."""
        lams = np.atleast_2d(np.asarray(lams, dtype=float))
        if np.any(~(lams > 0)):
            raise DomainError("prior standard deviations must be positive")
        coefs = rng.standard_normal(lams.shape) * lams
        probs = expit(coefs[:, :1] + coefs[:, 1:] * DOSES[None, :])
        counts = rng.binomial(self.trials, probs)
        modes = bioassay_posterior_mode_batch(counts, self.trials, self.prior_sd)
        return fitted_probabilities(modes, self.transform)


def bioassay_simulate(sigma0: float, sigma1: float, rng: np.random.Generator, **kwargs) -> np.ndarray:
    """One (p2, p3) statistic under the prior (sigma0, sigma1)."""
    return BioassaySimulator(**kwargs)(np.array([sigma0, sigma1]), rng, 1)[0]


def simulate_corpus(
    count: int,
    rng: np.random.Generator,
    simulator: BioassaySimulator,
    bounds: Tuple[Tuple[float, float], Tuple[float, float]] = ((0.1, 10.0), (0.1, 20.0)),
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Draw lam uniformly from the box `bounds`, then one statistic per lam.

    Returns:
        (lambdas, statistics), each count x 2
    """
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    lambdas = lo + (hi - lo) * rng.random((count, 2))
    stats = simulator.simulate_rows(lambdas, rng)
    logger.info(f"Simulated bioassay corpus of {count} rows")
    return lambdas, stats
