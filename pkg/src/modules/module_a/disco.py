"""
Conditional distance correlation estimators

Given distance matrices A (predictions), B (bias) and a row-stochastic
kernel weight matrix W over the conditioning variable, every reference
point i defines a local squared distance covariance

    V_i = sum_kl W_ik W_il A~(i)_kl B~(i)_kl

where A~(i) is A centered with the weights of row i. Three estimators are
provided:

- naive: local centering per reference row, O(n^2) memory per row
- DISCO_m: naive ratios averaged over m sampled reference rows
- sDISCO: all n local covariances at once from the factorization
      T1 = (W o (W (A o B))) 1
      T2 = (W o W A) 1  o  (W o W B) 1
      T3 = (W o (W A o W B)) 1
      V  = T1 + T2 - 2 T3
  using a constant number of n x n buffers.

The distance matrices must be symmetric (as every distance matrix is).
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from src.exceptions import (
    CapacityError, ConfigurationError, ContractError, DimensionError, EstimatorUndefinedError
)
from src.utils.allocation import record
from src.utils.matrix_engine import (
    EPS_CLAMP, Matrix, Tape, Var, freeze, pairwise_sq_distances
)
from src.utils.rng import stream
from .disco_config import BANDWIDTH_DECAY, M_FRACTION, MIN_BATCH, NAIVE_BROADCAST_MAX_N, ROW_SUM_TOL
from .distance import as_points, pairwise_distance, standardize_columns

logger = logging.getLogger(__name__)

MatrixOrVar = Union[Matrix, Var]


@dataclass(frozen=True)
class LocalStatistics:
    """Per-reference-point local squared distance covariances"""
    v_xy: np.ndarray
    v_xx: np.ndarray
    v_yy: np.ndarray

    @classmethod
    def from_raw(cls, v_xy, v_xx, v_yy, tolerance: float = EPS_CLAMP) -> "LocalStatistics":
        """Clamp variance entries in [-tolerance, 0) to 0"""
        v_xx = np.asarray(v_xx, dtype=np.float64).reshape(-1)
        v_yy = np.asarray(v_yy, dtype=np.float64).reshape(-1)
        for name, v in (("v_xx", v_xx), ("v_yy", v_yy)):
            if v.size and v.min() < -tolerance:
                logger.warning(f"{name} has entry {v.min():.3e} below clamp tolerance")
        return cls(
            v_xy=np.asarray(v_xy, dtype=np.float64).reshape(-1),
            v_xx=np.maximum(v_xx, 0.0),
            v_yy=np.maximum(v_yy, 0.0)
        )

    def ratios(self) -> np.ndarray:
        """v_xy / sqrt(v_xx * v_yy) with 0/0 := 0"""
        denom = np.sqrt(self.v_xx) * np.sqrt(self.v_yy)
        out = np.zeros_like(self.v_xy)
        np.divide(self.v_xy, denom, out=out, where=(denom != 0))
        return out

    def estimate(self) -> float:
        return float(np.mean(self.ratios()))


# ===== Kernel weights =====

def rbf_weights(Z, bandwidth: float) -> Matrix:
    """
    Row-normalized RBF kernel matrix over the conditioning variable

    Args:
        Z: n x dim conditioning values (one-hot rows for categorical targets)
        bandwidth: Kernel width, must be > 0

    Returns:
        n x n row-stochastic matrix (a gradient constant) with entries in (0, 1]

    Note:
        Rows are shifted by their maximum log-kernel (the diagonal) before
        exponentiation. Weights that underflow at very small bandwidth are
        floored at the smallest normal float, which moves row sums by less
        than n * 2.3e-308.
    """
    if not bandwidth > 0 or not math.isfinite(bandwidth):
        raise ConfigurationError(f"bandwidth must be a positive finite number, got {bandwidth}")
    pts = as_points(Z, name="condition")
    log_k = -pairwise_sq_distances(pts) / (2.0 * bandwidth * bandwidth)
    log_k -= log_k.max(axis=1, keepdims=True)
    k = np.exp(log_k)
    return freeze(np.maximum(k / k.sum(axis=1, keepdims=True), np.finfo(np.float64).tiny))


def uniform_weights(n: int) -> Matrix:
    """Weight matrix of a constant conditioning variable"""
    return freeze(np.full((n, n), 1.0 / n))


def bandwidth_for_n(base: float, n: int) -> float:
    """Bandwidth shrinking as n^(-1/5)"""
    return float(base) * float(n) ** BANDWIDTH_DECAY


def default_m(n: int, fraction: float = M_FRACTION) -> int:
    """Number of DISCO_m reference points for a batch of n"""
    return max(1, min(n, int(math.ceil(fraction * n))))


# ===== Naive local estimator =====

def _check_weight_row(A: np.ndarray, w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square distance matrix, got {A.shape}")
    if w.size != A.shape[0]:
        raise DimensionError(f"weight row of length {w.size} does not match n={A.shape[0]}")
    if abs(float(w.sum()) - 1.0) > ROW_SUM_TOL:
        raise ContractError(f"weight row must sum to 1, sums to {float(w.sum()):.12f}")
    return w


def local_center_naive(A: Matrix, w) -> Matrix:
    """
    Center a distance matrix with the weights of one reference row

    A(i)_kl = a_kl - sum_k w_k a_kl - sum_l w_l a_kl + sum_kl w_k w_l a_kl
    """
    A = np.asarray(A, dtype=np.float64)
    w = _check_weight_row(A, w)
    col_mean = w @ A
    row_mean = A @ w
    grand = float(w @ A @ w)
    return freeze(A - row_mean[:, None] - col_mean[None, :] + grand)


def local_dcov_naive(A: Matrix, B: Matrix, w) -> float:
    """Weighted inner product of the locally centered A and B"""
    if np.shape(A) != np.shape(B):
        raise DimensionError(f"distance matrices differ in size: {np.shape(A)} vs {np.shape(B)}")
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    a = local_center_naive(A, w)
    b = local_center_naive(B, w)
    return float(w @ (a * b) @ w)


def local_dcov_expansion(A: Matrix, B: Matrix, w) -> float:
    """
    Local covariance through the explicit D1 + D2 - 2 D3 sums

    D1 = sum_kl w_k w_l a_kl b_kl
    D2 = (sum_kl w_k w_l a_kl)(sum_kl w_k w_l b_kl)
    D3 = sum_klm w_k w_l w_m a_kl b_km
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape:
        raise DimensionError(f"distance matrices differ in size: {A.shape} vs {B.shape}")
    w = _check_weight_row(A, w)
    d1 = np.einsum("k,l,kl,kl->", w, w, A, B, optimize=False)
    d2 = np.einsum("k,l,kl->", w, w, A, optimize=False) * np.einsum("k,l,kl->", w, w, B, optimize=False)
    d3 = np.einsum("k,l,m,kl,km->", w, w, w, A, B, optimize=False)
    return float(d1 + d2 - 2.0 * d3)


def local_statistics_naive(A: Matrix, B: Matrix, W: Matrix, rows=None) -> LocalStatistics:
    """
    Local statistics by centering once per reference row

    Args:
        A, B: n x n distance matrices
        W: Weight matrix
        rows: Reference rows to evaluate (all rows by default)
    """
    W = np.asarray(W, dtype=np.float64)
    _check_shapes(A, B, W)
    idx = range(W.shape[0]) if rows is None else [int(r) for r in rows]
    v_xy, v_xx, v_yy = [], [], []
    for i in idx:
        w = W[i]
        a = local_center_naive(A, w)
        b = local_center_naive(B, w)
        v_xy.append(float(w @ (a * b) @ w))
        v_xx.append(float(w @ (a * a) @ w))
        v_yy.append(float(w @ (b * b) @ w))
    return LocalStatistics.from_raw(v_xy, v_xx, v_yy)


def sample_reference_rows(n: int, m: int, seed: int) -> np.ndarray:
    """m distinct reference rows drawn uniformly without replacement"""
    if not 1 <= m <= n:
        raise ConfigurationError(f"m must satisfy 1 <= m <= n={n}, got {m}")
    return stream(seed, "disco_m", n, m).choice(n, size=m, replace=False)


def disco_m(A: Matrix, B: Matrix, W: Matrix, m: Optional[int] = None, seed: int = 0) -> float:
    """
    DISCO_m: mean local ratio over m sampled reference points

    Args:
        A, B: n x n distance matrices
        W: Weight matrix
        m: Number of reference points (default ceil(0.2 n))
        seed: Sampling seed

    Returns:
        Estimate with the 0/0 := 0 convention
    """
    n = np.shape(W)[0]
    m = default_m(n) if m is None else int(m)
    rows = sample_reference_rows(n, m, seed)
    return local_statistics_naive(A, B, W, rows=rows).estimate()


# ===== Single-shot factorization =====

def _check_shapes(A, B, W) -> None:
    shapes = {np.shape(A), np.shape(B)}
    if len(shapes) != 1:
        raise DimensionError(f"distance matrices differ in size: {np.shape(A)} vs {np.shape(B)}")
    n = np.shape(A)[0]
    if np.shape(A) != (n, n):
        raise DimensionError(f"expected square distance matrices, got {np.shape(A)}")
    if np.ndim(W) != 2 or np.shape(W)[1] != n:
        raise DimensionError(f"weight matrix {np.shape(W)} does not match n={n}")


def _as_var(tape: Tape, x: MatrixOrVar, name: str) -> Var:
    if isinstance(x, Var):
        return x
    return tape.constant(x, name=name)


def local_statistics_var(tape: Tape, a: Var, b: Var, w: Var) -> Tuple[Var, Var, Var]:
    """
    Differentiable local statistics for every row of w

    w may hold all n rows (sDISCO) or a subset of reference rows (DISCO_m).
    Returns (v_xy, v_xx, v_yy) as column vectors.
    """
    _check_shapes(a.value, b.value, w.value)
    mx = w @ a
    my = w @ b
    gx = tape.row_sum(w * mx)
    gy = tape.row_sum(w * my)

    def local_cov(p: Var, q: Var, mp: Var, mq: Var, gp: Var, gq: Var) -> Var:
        t1 = tape.row_sum(w * (w @ (p * q)))
        t2 = gp * gq
        t3 = tape.row_sum(w * (mp * mq))
        return t1 + t2 - 2.0 * t3

    v_xy = local_cov(a, b, mx, my, gx, gy)
    v_xx = local_cov(a, a, mx, mx, gx, gx)
    v_yy = local_cov(b, b, my, my, gy, gy)
    return v_xy, v_xx, v_yy


def _clamp_tolerance(v: Var) -> float:
    scale = float(np.max(np.abs(v.value))) if v.value.size else 0.0
    return EPS_CLAMP * max(1.0, scale)


def local_ratio_mean_var(tape: Tape, a: Var, b: Var, w: Var) -> Var:
    """Mean over the rows of w of v_xy / sqrt(v_xx v_yy), 0/0 := 0"""
    v_xy, v_xx, v_yy = local_statistics_var(tape, a, b, w)
    denom = tape.sqrt(v_xx, _clamp_tolerance(v_xx)) * tape.sqrt(v_yy, _clamp_tolerance(v_yy))
    return tape.mean_all(tape.divide_safe(v_xy, denom))


def sdisco_components(A: Matrix, B: Matrix, W: Matrix) -> LocalStatistics:
    """
    All n local statistics from the single-shot factorization

    Args:
        A, B: n x n distance matrices
        W: n x n weight matrix

    Returns:
        LocalStatistics with clamped variances
    """
    _check_shapes(A, B, W)
    tape = Tape()
    v_xy, v_xx, v_yy = local_statistics_var(
        tape, tape.constant(A, "A"), tape.constant(B, "B"), tape.constant(W, "W")
    )
    return LocalStatistics.from_raw(
        v_xy.value, v_xx.value, v_yy.value,
        tolerance=max(_clamp_tolerance(v_xx), _clamp_tolerance(v_yy))
    )


def sdisco(A: MatrixOrVar, B: MatrixOrVar, W: MatrixOrVar, tape: Optional[Tape] = None) -> Union[float, Var]:
    """
    Single-shot conditional distance correlation

    With plain matrices the estimate is returned as a float in [0, 1].
    When A or B is a tape variable the result is a differentiable 1 x 1
    node on that tape (W is always a constant).
    """
    differentiable = isinstance(A, Var) or isinstance(B, Var)
    if tape is None:
        tape = A.tape if isinstance(A, Var) else B.tape if isinstance(B, Var) else Tape()
    a = _as_var(tape, A, "A")
    b = _as_var(tape, B, "B")
    w = _as_var(tape, W, "W")
    if not w.constant:
        raise ContractError("weight matrix must be a gradient constant")
    out = local_ratio_mean_var(tape, a, b, w)
    if differentiable:
        return out
    return float(min(max(out.item(), 0.0), 1.0))


def disco_m_var(tape: Tape, a: Var, b: Var, W: Matrix, m: int, seed: int) -> Var:
    """Differentiable DISCO_m restricted to m sampled reference rows"""
    n = np.shape(W)[0]
    rows = sample_reference_rows(n, m, seed)
    w = tape.constant(np.asarray(W)[rows], name="W_m")
    return local_ratio_mean_var(tape, a, b, w)


def naive_broadcast_dcor(A: Matrix, B: Matrix, W: Matrix) -> float:
    """
    Naive estimator evaluated with (n, n, n) tensors

    Materializes every locally centered matrix at once; refuses n above
    NAIVE_BROADCAST_MAX_N.
    """
    _check_shapes(A, B, W)
    n = np.shape(A)[0]
    if n > NAIVE_BROADCAST_MAX_N:
        raise CapacityError(f"naive broadcast estimator limited to n <= {NAIVE_BROADCAST_MAX_N}, got {n}")
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)

    def center(D: np.ndarray) -> np.ndarray:
        m = W @ D
        g = np.sum(W * m, axis=1)
        out = D[None, :, :] - m[:, :, None] - m[:, None, :] + g[:, None, None]
        record(out.shape)
        return out

    a = center(A)
    b = center(B)
    v_xy = np.einsum("ik,il,ikl->i", W, W, a * b)
    v_xx = np.einsum("ik,il,ikl->i", W, W, a * a)
    v_yy = np.einsum("ik,il,ikl->i", W, W, b * b)
    record((3, n, n, n))
    return LocalStatistics.from_raw(v_xy, v_xx, v_yy).estimate()


# ===== Training penalty =====

def penalty(
    predictions: MatrixOrVar,
    bias,
    condition,
    bandwidth: float,
    estimator: str = "sdisco",
    m: Optional[int] = None,
    seed: int = 0
) -> Var:
    """
    Conditional dependence penalty of predictions on bias given condition

    Args:
        predictions: n x k predictions (tape variable or matrix)
        bias: n x b bias attributes, standardized per column
        condition: n x c conditioning values (targets)
        bandwidth: RBF bandwidth over the condition
        estimator: "sdisco" or "disco_m"
        m: DISCO_m reference count (default ceil(0.2 n))
        seed: DISCO_m sampling seed

    Returns:
        Differentiable 1 x 1 node; gradients flow into predictions only
    """
    if isinstance(predictions, Var):
        tape = predictions.tape
        p = predictions
    else:
        tape = Tape()
        p = tape.leaf(predictions, name="predictions")
    n = p.shape[0]
    if n < MIN_BATCH:
        raise EstimatorUndefinedError(f"penalty needs at least {MIN_BATCH} samples, got {n}")
    bias_pts = as_points(bias, name="bias")
    cond_pts = as_points(condition, name="condition")
    if bias_pts.shape[0] != n or cond_pts.shape[0] != n:
        raise DimensionError(
            f"penalty inputs disagree in n: predictions {n}, bias {bias_pts.shape[0]}, "
            f"condition {cond_pts.shape[0]}"
        )

    a = tape.pdist(p)
    b = tape.constant(pairwise_distance(standardize_columns(bias_pts)), name="B")
    weights = rbf_weights(cond_pts, bandwidth)
    if estimator == "sdisco":
        return local_ratio_mean_var(tape, a, b, tape.constant(weights, name="W"))
    if estimator == "disco_m":
        return disco_m_var(tape, a, b, weights, default_m(n) if m is None else m, seed)
    raise ConfigurationError(f"Unknown estimator '{estimator}'")
