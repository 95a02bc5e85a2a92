"""
Accuracy metrics and in-sample fitted values.
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from src.model.state import VariationalState
from src.utils.exceptions import DimensionMismatchError, InsufficientDataError
from src.utils.logger import get_application_logger

logger = get_application_logger(__name__)


@dataclass(frozen=True)
class MetricsReport:
    """
    Per-dimension RMSE and MAPE over rows, their means across dimensions,
    and pooled values over every (row, dimension) entry.
    """

    rmse: np.ndarray
    mape: np.ndarray
    mape_skipped: np.ndarray
    pooled_rmse: float
    pooled_mape: float

    @property
    def mean_rmse(self) -> float:
        return float(np.mean(self.rmse))

    @property
    def mean_mape(self) -> float:
        return float(np.nanmean(self.mape)) if np.any(np.isfinite(self.mape)) else float("nan")

    def to_frame(self, names: Optional[Sequence[str]] = None) -> pd.DataFrame:
        names = list(names) if names is not None else [f"y{l + 1}" for l in range(self.rmse.size)]
        frame = pd.DataFrame({
            "dimension": names + ["mean", "pooled"],
            "rmse": list(self.rmse) + [self.mean_rmse, self.pooled_rmse],
            "mape": list(self.mape) + [self.mean_mape, self.pooled_mape],
            "mape_skipped": list(self.mape_skipped) + [int(self.mape_skipped.sum()), int(self.mape_skipped.sum())],
        })
        return frame


def metrics(truth: np.ndarray, fitted: np.ndarray) -> MetricsReport:
    """
    RMSE and MAPE of fitted against truth.

    Rows whose truth is zero are left out of MAPE for that dimension and
    counted in mape_skipped.

    Raises:
        DimensionMismatchError: Shapes differ
    """
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    fitted = np.atleast_2d(np.asarray(fitted, dtype=float))
    if truth.shape != fitted.shape:
        raise DimensionMismatchError(f"truth shape {truth.shape} != fitted shape {fitted.shape}")
    if truth.shape[0] == 0:
        raise InsufficientDataError("metrics need at least one row")
    err = truth - fitted
    rmse = np.sqrt(np.mean(err ** 2, axis=0))

    zero = truth == 0
    skipped = zero.sum(axis=0)
    rel = np.abs(np.divide(err, truth, out=np.zeros_like(err), where=~zero))
    kept = (~zero).sum(axis=0)
    mape = np.where(kept > 0, rel.sum(axis=0) / np.maximum(kept, 1), np.nan)
    if skipped.any():
        logger.warning(f"MAPE skipped {int(skipped.sum())} zero-truth value(s)")

    pooled_mape = float(rel[~zero].mean()) if (~zero).any() else float("nan")
    return MetricsReport(rmse, mape, skipped, float(np.sqrt(np.mean(err ** 2))), pooled_mape)


def insample_fit(state: VariationalState, alloc: Optional[np.ndarray], E: np.ndarray) -> np.ndarray:
    """
    Fitted values (sum_j q_ij beta_hat_j)^T E_i for every row.

    Args:
        state: Fitted state
        alloc: n x T allocation probabilities (batch table or online history)
        E: n x (N+1) design rows

    Returns:
        n x m fitted responses
    """
    if alloc is None:
        raise InsufficientDataError("in-sample fit needs the allocation history")
    q = np.atleast_2d(np.asarray(alloc, dtype=float))
    E = np.atleast_2d(np.asarray(E, dtype=float))
    if q.shape != (E.shape[0], state.trunc):
        raise DimensionMismatchError(f"allocation shape {q.shape} does not match {E.shape[0]} rows and T={state.trunc}")
    per_component = np.stack([E @ c.beta_hat for c in state.components], axis=1)
    return np.einsum("nt,ntm->nm", q, per_component)
