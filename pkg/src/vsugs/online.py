"""
One-pass online fitting: a batch warm start followed by sequential
assimilation of each remaining observation.
"""
import itertools
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from src.basis.kernel_basis import BasisMap
from src.batchvb.coordinate_ascent import BatchDiagnostics, BatchOptions, fit_batch_designs, update_omega
from src.elbo.recursive_bound import BoundBreakdown, step_lower_bound
from src.model.hyperparameters import Hyperparameters
from src.model.state import ComponentState, VariationalState, init_state
from src.numstat.distributions import InvGammaParams, InvWishartParams
from src.numstat.linalg import SpdMatrix
from src.utils.exceptions import DimensionMismatchError, DomainError, InsufficientDataError
from src.utils.logger import get_application_logger
from src.vsugs.allocation import AllocProbs, alloc_probs

logger = get_application_logger(__name__)

TAU_MODES = ("accumulate", "recompute")


class OnlineOptions(BaseModel):
    """Warm start, seeding and b_tau handling for fit_online."""

    warm_count: int = Field(200, ge=0)
    seed: int = Field(0, ge=0)
    max_iter: int = Field(100, ge=1)
    tol: float = Field(1e-8, gt=0)
    tau_mode: str = Field("accumulate", pattern="^(accumulate|recompute)$")
    track_elbo: bool = False


@dataclass
class OnlineFit:
    state: VariationalState
    alloc_history: np.ndarray
    warm_diagnostics: Optional[BatchDiagnostics] = None
    bound_trace: List[BoundBreakdown] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)


def _recomputed_tau_rate(state: VariationalState, h: Hyperparameters) -> float:
    """Batch b_tau over all data seen so far, evaluated from sufficient statistics."""
    m = state.response_dim
    sigma_inv = state.sigma.expected_inverse()
    total = 0.0
    for comp, stats in zip(state.components, state.suff_stats):
        B = comp.beta_hat
        resid = stats.yy - B.T @ stats.ey - stats.ey.T @ B + B.T @ stats.ee @ B
        total += float(np.sum(sigma_inv * resid))
        total += m * float(np.trace(comp.prec.solve(stats.ee)))
    return h.b_tau + 0.5 * total


def assimilate_one(
    y: np.ndarray,
    e: np.ndarray,
    state: VariationalState,
    alloc: AllocProbs,
    h: Hyperparameters,
    tau_mode: str = "accumulate",
) -> VariationalState:
    """
    Fold one observation into the state with its allocation probabilities.

    Components with zero probability are carried over untouched. S, then
    nu S^{-1}, then b_tau are updated in that order; q(omega) is recomputed by
    the batch formula from the new factors.

    Args:
        y: m-vector response
        e: Design vector
        state: State after i - 1 observations
        alloc: Allocation probabilities of observation i
        h: Hyperparameters (priors for q(omega) and the recompute mode)
        tau_mode: "accumulate" or "recompute"

    Returns:
        State after i observations
    """
    if tau_mode not in TAU_MODES:
        raise DomainError(f"unknown tau mode {tau_mode!r}")
    y = np.asarray(y, dtype=float).ravel()
    e = np.asarray(e, dtype=float).ravel()
    m = state.response_dim
    if y.shape[0] != m or e.shape[0] != state.design_dim:
        raise DimensionMismatchError("observation does not match state dimensions")
    q = alloc.probs
    mu = state.expectations().tau_inv

    scale = state.sigma.scale.values + mu * float(q.sum()) * np.outer(y, y)
    components = []
    for comp, q_j in zip(state.components, q):
        if q_j <= 0.0:
            components.append(comp)
            continue
        prec = comp.prec.rank_one_update(np.sqrt(mu * q_j) * e)
        beta_hat = prec.solve(comp.prec.matmul(comp.beta_hat) + mu * q_j * np.outer(e, y))
        scale += comp.beta_hat.T @ comp.prec.matmul(comp.beta_hat) - beta_hat.T @ prec.matmul(beta_hat)
        components.append(ComponentState(beta_hat, prec, comp.mass + float(q_j)))

    sigma = InvWishartParams(state.sigma.dof + 1.0, SpdMatrix.from_values(0.5 * (scale + scale.T), "S"))
    suff = state.suff_stats
    if suff is not None:
        suff = tuple(s.add(float(q_j), e, y) if q_j > 0 else s for s, q_j in zip(suff, q))
    new_state = state.replace(components=tuple(components), sigma=sigma, seen=state.seen + 1, suff_stats=suff)

    a_tau = float(state.tau.shape) + 0.5 * m
    if tau_mode == "recompute":
        if suff is None:
            raise DomainError("recompute tau mode needs sufficient statistics in the state")
        b_tau = _recomputed_tau_rate(new_state, h)
    else:
        sigma_inv = sigma.expected_inverse()
        extra = 0.0
        for comp, q_j in zip(components, q):
            if q_j <= 0.0:
                continue
            resid = y - comp.beta_hat.T @ e
            extra += q_j * (float(resid @ sigma_inv @ resid) + m * float(comp.prec.inv_quad(e)))
        b_tau = float(state.tau.rate) + 0.5 * extra
    new_state = new_state.replace(tau=InvGammaParams(a_tau, b_tau))
    return new_state.replace(omegas=update_omega(new_state, h))


def _split_stream(stream: Iterable[Tuple[np.ndarray, np.ndarray]], warm: int):
    iterator = iter(stream)
    prefix = list(itertools.islice(iterator, warm))
    if len(prefix) < warm:
        raise InsufficientDataError(f"warm start needs {warm} rows, stream has {len(prefix)}")
    return prefix, iterator


def fit_online(
    stream: Iterable[Tuple[np.ndarray, np.ndarray]],
    h: Hyperparameters,
    basis: BasisMap,
    opts: Optional[OnlineOptions] = None,
) -> OnlineFit:
    """
    Batch-fit the first warm_count rows, then assimilate the rest in arrival order.

    Args:
        stream: Iterable of (raw covariate vector, response vector)
        h: Hyperparameters
        basis: Fitted design map
        opts: Warm-start size, seed, b_tau mode, bound tracking

    Returns:
        OnlineFit with the final state and the per-row allocation history
    """
    opts = opts or OnlineOptions()
    track_suff = opts.tau_mode == "recompute"
    timings: Dict[str, float] = {}
    prefix, rest = _split_stream(stream, opts.warm_count)

    start = time.perf_counter()
    history: List[np.ndarray] = []
    warm_diagnostics = None
    if prefix:
        Xw = np.array([np.asarray(x, dtype=float).ravel() for x, _ in prefix])
        Yw = np.array([np.asarray(y, dtype=float).ravel() for _, y in prefix])
        batch_opts = BatchOptions(max_iter=opts.max_iter, tol=opts.tol, seed=opts.seed, track_suff_stats=track_suff)
        warm = fit_batch_designs(Yw, basis.design(Xw), h, batch_opts)
        state = warm.state
        warm_diagnostics = warm.diagnostics
        history.extend(warm.alloc.q)
    else:
        state = init_state(h, track_suff_stats=track_suff)
    timings["warm_batch"] = time.perf_counter() - start
    logger.info(f"Warm start done on {len(prefix)} rows in {timings['warm_batch']:.2f}s")

    start = time.perf_counter()
    bound_trace: List[BoundBreakdown] = []
    for x, y in rest:
        y = np.asarray(y, dtype=float).ravel()
        e = basis.design(np.asarray(x, dtype=float).ravel()[None, :])[0]
        alloc = alloc_probs(y, e, state, h.alpha)
        new_state = assimilate_one(y, e, state, alloc, h, opts.tau_mode)
        if opts.track_elbo:
            bound_trace.append(step_lower_bound(y, e, state, new_state, alloc))
        history.append(alloc.probs)
        state = new_state
    timings["online_loop"] = time.perf_counter() - start

    logger.info(
        "Online pass done",
        seen=state.seen,
        occupied=state.occupied,
        masses=state.masses,
        elapsed=round(timings["online_loop"], 3),
    )
    alloc_history = np.array(history) if history else np.zeros((0, h.trunc))
    return OnlineFit(state, alloc_history, warm_diagnostics, bound_trace, timings)
