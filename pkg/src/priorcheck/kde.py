"""
Product-Gaussian kernel density estimate with a per-dimension normal-reference bandwidth.
"""
import numpy as np

from src.utils.exceptions import DegenerateSampleError, DimensionMismatchError

CHUNK_ROWS = 2048


def _as_matrix(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return values[:, None] if values.ndim == 1 else values


def silverman_bandwidth(points: np.ndarray) -> np.ndarray:
    """1.06 * sd * n^(-1/5) per dimension, sd with ddof=1."""
    points = _as_matrix(points)
    n = points.shape[0]
    if n < 2:
        raise DegenerateSampleError(f"density estimate needs at least 2 points, got {n}")
    sd = points.std(axis=0, ddof=1)
    if not np.all(sd > 0):
        raise DegenerateSampleError(f"zero-variance dimension(s): {np.flatnonzero(~(sd > 0)).tolist()}")
    return 1.06 * sd * n ** (-0.2)


def kde(points: np.ndarray, eval_points: np.ndarray) -> np.ndarray:
    """
    Density estimate of `points` evaluated at each row of `eval_points`.

    Args:
        points: n x d sample (or length-n for d = 1)
        eval_points: k x d evaluation points (or length-k)

    Returns:
        Length-k vector of non-negative densities

    Raises:
        DegenerateSampleError: Fewer than two points or a zero-variance dimension
    """
    points = _as_matrix(points)
    eval_points = _as_matrix(eval_points)
    if eval_points.shape[1] != points.shape[1]:
        raise DimensionMismatchError(
            f"evaluation points have {eval_points.shape[1]} dimensions, sample has {points.shape[1]}"
        )
    bw = silverman_bandwidth(points)
    n, d = points.shape
    norm = n * np.prod(bw) * (2.0 * np.pi) ** (0.5 * d)
    scaled = points / bw

    out = np.empty(eval_points.shape[0])
    for start in range(0, eval_points.shape[0], CHUNK_ROWS):
        block = eval_points[start:start + CHUNK_ROWS] / bw
        sq = np.sum((block[:, None, :] - scaled[None, :, :]) ** 2, axis=2)
        out[start:start + CHUNK_ROWS] = np.exp(-0.5 * sq).sum(axis=1) / norm
    return out
