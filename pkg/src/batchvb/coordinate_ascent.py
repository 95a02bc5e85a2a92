"""
Batch mean-field coordinate ascent under the truncated Polya-urn prior.

One sweep updates q(beta, Sigma), then q(tau), then q(omega), then the
allocation table. The allocation update reads the previous sweep's table
for every row, so a sweep does not depend on row order.
"""
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field
from scipy.special import logsumexp

from src.basis.kernel_basis import BasisMap
from src.model.expectations import expected_log_likelihood
from src.model.hyperparameters import Hyperparameters
from src.model.state import (
    AllocationTable,
    ComponentState,
    SufficientStats,
    VariationalState,
    init_state,
)
from src.numstat.distributions import InvGammaParams, InvWishartParams
from src.numstat.linalg import SpdMatrix
from src.utils.exceptions import DimensionMismatchError
from src.utils.logger import get_application_logger

logger = get_application_logger(__name__)


class BatchOptions(BaseModel):
    """Stopping rule and seeding for fit_batch."""

    max_iter: int = Field(100, ge=1)
    tol: float = Field(1e-8, gt=0)
    seed: int = Field(0, ge=0)
    track_suff_stats: bool = False


@dataclass
class BatchDiagnostics:
    iterations: int = 0
    converged: bool = False
    max_changes: List[float] = field(default_factory=list)
    elapsed_seconds: float = 0.0


@dataclass
class BatchFit:
    state: VariationalState
    alloc: AllocationTable
    diagnostics: BatchDiagnostics


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _check_shapes(Y: np.ndarray, E: np.ndarray, trunc: int, q: Optional[np.ndarray] = None) -> None:
    if Y.shape[0] != E.shape[0]:
        raise DimensionMismatchError(f"{Y.shape[0]} responses but {E.shape[0]} designs")
    if q is not None and q.shape != (Y.shape[0], trunc):
        raise DimensionMismatchError(f"allocation table shape {q.shape} != {(Y.shape[0], trunc)}")


def update_global(
    Y: np.ndarray,
    E: np.ndarray,
    alloc: AllocationTable,
    state: VariationalState,
    h: Hyperparameters,
) -> VariationalState:
    """
    Update every q(beta_j | Sigma) and q(Sigma) given the allocation table.

    Args:
        Y: n x m responses
        E: n x (N+1) designs
        alloc: Current allocation table
        state: Current state (supplies E_q(1/tau) and E_q(Omega^{-1}))
        h: Prior hyperparameters

    Returns:
        State with new components (masses = column sums of q) and sigma
    """
    q = alloc.q
    _check_shapes(Y, E, state.trunc, q)
    ex = state.expectations()
    n = Y.shape[0]

    scale = np.array(h.sigma_scale, dtype=float)
    scale += ex.tau_inv * ((Y.T * q.sum(axis=1)) @ Y)

    components = []
    for j in range(state.trunc):
        w = q[:, j]
        prior_prec = np.diag(ex.omega_inv) + h.prior_precs[j]
        Ew = E * w[:, None]
        V = _symmetrize(prior_prec + ex.tau_inv * (Ew.T @ E))
        prec = SpdMatrix.from_values(V, f"V_{j}")
        M = h.prior_means[j]
        beta_hat = prec.solve(prior_prec @ M + ex.tau_inv * (Ew.T @ Y))
        scale += M.T @ prior_prec @ M - beta_hat.T @ prec.matmul(beta_hat)
        components.append(ComponentState(beta_hat, prec, float(w.sum())))

    sigma = InvWishartParams(h.sigma_dof + n, SpdMatrix.from_values(_symmetrize(scale), "S"))
    return state.replace(components=tuple(components), sigma=sigma, seen=n)


def update_tau(
    Y: np.ndarray,
    E: np.ndarray,
    alloc: AllocationTable,
    state: VariationalState,
    h: Hyperparameters,
) -> InvGammaParams:
    """q(tau) = IG(a_tau + nm/2, b_tau + residual and leverage terms) from current beta, V, Sigma."""
    q = alloc.q
    _check_shapes(Y, E, state.trunc, q)
    n, m = Y.shape
    sigma_inv = state.sigma.expected_inverse()
    total = 0.0
    for j, comp in enumerate(state.components):
        resid = Y - E @ comp.beta_hat
        quad = np.einsum("ik,kl,il->i", resid, sigma_inv, resid)
        leverage = comp.prec.inv_quad(E.T)
        total += float(np.dot(q[:, j], quad + m * leverage))
    return InvGammaParams(h.a_tau + 0.5 * n * m, h.b_tau + 0.5 * total)


def update_omega(state: VariationalState, h: Hyperparameters) -> InvGammaParams:
    """q(omega_k) = IG(a_k + mT/2, b_k + half the summed row quadratic forms and m diag(V_j^{-1}))."""
    m = state.response_dim
    sigma_inv = state.sigma.expected_inverse()
    extra = np.zeros(state.design_dim)
    for j, comp in enumerate(state.components):
        D = comp.beta_hat - h.prior_means[j]
        extra += np.einsum("kr,rl,kl->k", D, sigma_inv, D) + m * comp.prec.inverse_diagonal
    return InvGammaParams(h.a_omega + 0.5 * m * state.trunc, h.b_omega + 0.5 * extra)


def candidate_mask(n: int, trunc: int, offset: int = 0) -> np.ndarray:
    """Boolean n x T mask of j <= min(i, T) for rows i = offset+1 .. offset+n."""
    rows = np.arange(offset, offset + n)[:, None]
    return np.arange(trunc)[None, :] <= rows


def update_delta(
    Y: np.ndarray,
    E: np.ndarray,
    state: VariationalState,
    alloc: AllocationTable,
    h: Hyperparameters,
) -> AllocationTable:
    """
    New allocation table from current global factors.

    The prior weight uses the previous table with row i's own entry removed:
    (sum_{k != i} q_kj + alpha/T) / (alpha + n - 1).
    """
    q_prev = alloc.q
    _check_shapes(Y, E, state.trunc, q_prev)
    n, T = q_prev.shape
    if n == 0:
        return AllocationTable(np.zeros((0, T)))

    loglik = np.column_stack([
        expected_log_likelihood(Y, E, comp, state.tau, state.sigma) for comp in state.components
    ])
    others = q_prev.sum(axis=0)[None, :] - q_prev
    prior = (np.maximum(others, 0.0) + h.alpha / T) / (h.alpha + n - 1)

    logits = np.where(candidate_mask(n, T), np.log(prior) + loglik, -np.inf)
    norm = logsumexp(logits, axis=1, keepdims=True)
    assert np.all(np.isfinite(norm)), "allocation row with no finite candidate"
    q = np.exp(logits - norm)
    q /= q.sum(axis=1, keepdims=True)
    return AllocationTable(q)


def _relative_change(old: np.ndarray, new: np.ndarray) -> float:
    old = np.asarray(old, dtype=float)
    new = np.asarray(new, dtype=float)
    if old.size == 0:
        return 0.0
    return float(np.max(np.abs(new - old)) / (np.max(np.abs(old)) + 1e-12))


def _max_change(
    old: VariationalState, new: VariationalState, q_old: np.ndarray, q_new: np.ndarray
) -> float:
    changes = [
        _relative_change(old.sigma.scale.values, new.sigma.scale.values),
        _relative_change(old.tau.rate, new.tau.rate),
        _relative_change(old.omegas.rate, new.omegas.rate),
        _relative_change(q_old, q_new),
    ]
    for a, b in zip(old.components, new.components):
        changes.append(_relative_change(a.beta_hat, b.beta_hat))
        changes.append(_relative_change(a.prec.values, b.prec.values))
    return max(changes)


def random_allocation(n: int, trunc: int, rng: np.random.Generator) -> AllocationTable:
    """One-hot table with row i assigned uniformly among its candidates 1..min(i, T)."""
    sizes = np.minimum(np.arange(n), trunc - 1) + 1
    labels = np.floor(rng.random(n) * sizes).astype(int)
    q = np.zeros((n, trunc))
    q[np.arange(n), labels] = 1.0
    return AllocationTable(q)


def sufficient_stats(Y: np.ndarray, E: np.ndarray, alloc: AllocationTable) -> tuple:
    """Per-component weighted sums matching SufficientStats."""
    stats = []
    for j in range(alloc.q.shape[1]):
        w = alloc.q[:, j]
        stats.append(SufficientStats(
            (E * w[:, None]).T @ E,
            (E * w[:, None]).T @ Y,
            (Y * w[:, None]).T @ Y,
        ))
    return tuple(stats)


def sweep(
    Y: np.ndarray,
    E: np.ndarray,
    alloc: AllocationTable,
    state: VariationalState,
    h: Hyperparameters,
) -> tuple:
    """One global -> tau -> omega -> delta pass; returns (state, alloc)."""
    state = update_global(Y, E, alloc, state, h)
    state = state.replace(tau=update_tau(Y, E, alloc, state, h))
    state = state.replace(omegas=update_omega(state, h))
    return state, update_delta(Y, E, state, alloc, h)


def fit_batch_designs(
    Y: np.ndarray,
    E: np.ndarray,
    h: Hyperparameters,
    opts: Optional[BatchOptions] = None,
    init_alloc: Optional[AllocationTable] = None,
) -> BatchFit:
    """fit_batch on precomputed design rows, optionally from a given starting table."""
    opts = opts or BatchOptions()
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    E = np.atleast_2d(np.asarray(E, dtype=float))
    if Y.size == 0:
        Y = Y.reshape(0, h.response_dim)
        E = E.reshape(0, h.design_dim)
    _check_shapes(Y, E, h.trunc)
    if E.shape[1] != h.design_dim or Y.shape[1] != h.response_dim:
        raise DimensionMismatchError(
            f"data ({Y.shape[1]} responses, {E.shape[1]} design columns) does not match hyperparameters"
        )

    start = time.perf_counter()
    n = Y.shape[0]
    rng = np.random.default_rng(opts.seed)
    state = init_state(h)
    if init_alloc is None:
        alloc = random_allocation(n, h.trunc, rng)
    else:
        _check_shapes(Y, E, h.trunc, init_alloc.q)
        alloc = init_alloc
    diagnostics = BatchDiagnostics()
    logger.info("Starting batch VB", n=n, trunc=h.trunc, basis_count=h.basis_count, max_iter=opts.max_iter)

    for iteration in range(1, opts.max_iter + 1):
        new_state, new_alloc = sweep(Y, E, alloc, state, h)
        change = _max_change(state, new_state, alloc.q, new_alloc.q)
        state, alloc = new_state, new_alloc
        diagnostics.iterations = iteration
        diagnostics.max_changes.append(change)
        logger.debug("Batch sweep", sweep=iteration, max_change=change)
        if change < opts.tol:
            diagnostics.converged = True
            break

    components = tuple(
        ComponentState(c.beta_hat, c.prec, float(mass))
        for c, mass in zip(state.components, alloc.masses)
    )
    suff = sufficient_stats(Y, E, alloc) if opts.track_suff_stats else None
    state = state.replace(components=components, seen=n, suff_stats=suff)

    diagnostics.elapsed_seconds = time.perf_counter() - start
    if diagnostics.converged:
        logger.info(
            "Batch VB converged",
            sweeps=diagnostics.iterations,
            masses=alloc.masses,
            elapsed=round(diagnostics.elapsed_seconds, 3),
        )
    else:
        logger.warning(f"Batch VB stopped at max_iter={opts.max_iter} without reaching tol={opts.tol}")
    return BatchFit(state, alloc, diagnostics)


def fit_batch(
    X: np.ndarray,
    Y: np.ndarray,
    h: Hyperparameters,
    basis: BasisMap,
    opts: Optional[BatchOptions] = None,
) -> BatchFit:
    """
    Fit the mixture regression by batch coordinate ascent.

    Args:
        X: n x p raw covariates
        Y: n x m responses
        h: Hyperparameters
        basis: Fitted design map
        opts: Iteration limit, tolerance, seed

    Returns:
        BatchFit with final state, allocation table and per-sweep diagnostics
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    E = basis.design(X) if X.shape[0] else np.zeros((0, basis.design_dim))
    return fit_batch_designs(Y, E, h, opts)
