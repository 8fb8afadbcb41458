"""
Unconditional distance covariance / correlation (V-statistics)
"""
import logging
from typing import Optional

import numpy as np

from src.exceptions import ContractError, DimensionError, InputError
from src.utils.matrix_engine import Matrix, freeze, as_matrix, pairwise_sq_distances
from .disco_config import CONSTANT_STD_RTOL

logger = logging.getLogger(__name__)


def as_points(points, name: str = "points") -> Matrix:
    """Validate an n x dim point set (1-D input is one column)"""
    pts = as_matrix(points, name=name, finite=False)
    if pts.shape[0] < 1:
        raise ContractError(f"{name}: need at least one point")
    if not np.all(np.isfinite(pts)):
        raise InputError(f"{name}: non-finite coordinate")
    return pts


def pairwise_distance(points) -> Matrix:
    """
    Euclidean distance matrix of the rows of a point set

    Args:
        points: n x dim coordinates (or a length-n vector)

    Returns:
        Symmetric n x n matrix with zero diagonal
    """
    pts = as_points(points)
    return freeze(np.sqrt(pairwise_sq_distances(pts)))


def double_center(D: Matrix) -> Matrix:
    """Subtract row and column means and add back the grand mean"""
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise DimensionError(f"double_center: expected a square matrix, got {D.shape}")
    row = D.mean(axis=1, keepdims=True)
    col = D.mean(axis=0, keepdims=True)
    return freeze(D - row - col + D.mean())


def _require_pair(A: Matrix, B: Matrix) -> None:
    if np.shape(A) != np.shape(B):
        raise DimensionError(f"distance matrices differ in size: {np.shape(A)} vs {np.shape(B)}")


def dcov2(A: Matrix, B: Matrix) -> float:
    """Squared distance covariance V-statistic (1/n^2) sum(A~ * B~)"""
    _require_pair(A, B)
    return float(np.mean(double_center(A) * double_center(B)))


def dcor2(A: Matrix, B: Matrix) -> float:
    """
    Squared distance correlation with the 0/0 := 0 convention

    Returns:
        Value clamped to [0, 1]
    """
    _require_pair(A, B)
    a = double_center(A)
    b = double_center(B)
    vxy = float(np.mean(a * b))
    vxx = max(float(np.mean(a * a)), 0.0)
    vyy = max(float(np.mean(b * b)), 0.0)
    denom = np.sqrt(vxx * vyy)
    if denom == 0.0:
        return 0.0
    return float(min(max(vxy / denom, 0.0), 1.0))


def median_heuristic(points) -> float:
    """Median of the nonzero pairwise distances; 1.0 if every point coincides"""
    D = pairwise_distance(points)
    upper = D[np.triu_indices(D.shape[0], k=1)]
    nonzero = upper[upper > 0]
    if nonzero.size == 0:
        logger.warning("median_heuristic: all points coincide, falling back to bandwidth 1.0")
        return 1.0
    return float(np.median(nonzero))


def standardize_columns(values) -> Matrix:
    """Zero mean / unit variance per column; constant columns map to 0"""
    x = as_points(values, name="bias")
    mean = x.mean(axis=0, keepdims=True)
    centered = x - mean
    std = x.std(axis=0, keepdims=True)
    # rounding leaves std ~1e-17 on a constant column such as 0.1
    varying = std > CONSTANT_STD_RTOL * np.maximum(1.0, np.abs(mean))
    out = np.zeros_like(centered)
    np.divide(centered, std, out=out, where=varying)
    return freeze(out)


def one_hot(labels, n_classes: Optional[int] = None) -> Matrix:
    """Encode integer class labels as rows of the identity"""
    lab = np.asarray(labels).reshape(-1)
    if lab.size and not np.all(np.equal(np.mod(lab, 1), 0)):
        raise InputError("one_hot: labels must be integers")
    lab = lab.astype(np.int64)
    k = int(n_classes) if n_classes is not None else (int(lab.max()) + 1 if lab.size else 0)
    if lab.size and (lab.min() < 0 or lab.max() >= k):
        raise InputError(f"one_hot: label out of range [0, {k})")
    out = np.zeros((lab.size, k), dtype=np.float64)
    out[np.arange(lab.size), lab] = 1.0
    return freeze(out)
