"""
Dense float64 matrix arithmetic with reverse-mode differentiation

Matrices are plain 2-D numpy arrays of dtype float64 marked read-only.
Differentiable computations are recorded on a `Tape`: every operation
appends a node holding its forward value and a closure that maps the
node's adjoint to the adjoints of its parents. Nodes are appended in
creation order, so the node list is already topologically sorted.

A tape is meant to be rebuilt for every training step.
"""
import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.exceptions import ContractError, DimensionError, InputError, NumericDomainError
from src.utils.allocation import record

logger = logging.getLogger(__name__)

Matrix = np.ndarray
Number = Union[int, float]

# Negative variance entries above -EPS_CLAMP are rounding noise and clamp to 0
EPS_CLAMP = 1e-12

ELEMENTWISE_KINDS = ("sqrt", "divide-safe", "scale", "add", "subtract", "mean-all")


def as_matrix(data, name: str = "matrix", finite: bool = True) -> Matrix:
    """
    Convert data to an immutable float64 matrix

    Args:
        data: Array-like; 1-D input becomes a column vector
        name: Label used in error messages
        finite: Reject NaN/Inf entries

    Returns:
        Read-only 2-D float64 array
    """
    arr = np.array(data, dtype=np.float64, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if finite and not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def freeze(arr: np.ndarray) -> Matrix:
    """Mark an array read-only and report it to the active allocation tracker"""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    arr.setflags(write=False)
    record(arr.shape)
    return arr


def _require_same_shape(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _require_conform(a: np.ndarray, b: np.ndarray) -> None:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")


def _safe_quotient(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=np.float64)
    np.divide(a, b, out=out, where=(b != 0))
    return out


def _checked_sqrt(a: np.ndarray, tolerance: float) -> np.ndarray:
    lowest = float(a.min()) if a.size else 0.0
    if lowest < -tolerance:
        raise NumericDomainError(f"sqrt of negative entry {lowest:.3e} (tolerance {tolerance:.1e})")
    return np.sqrt(np.maximum(a, 0.0))


def pairwise_sq_distances(points: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, accumulated one coordinate at a time"""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    n = pts.shape[0]
    sq = np.zeros((n, n), dtype=np.float64)
    for c in range(pts.shape[1]):
        diff = pts[:, c, None] - pts[None, :, c]
        sq += diff * diff
    record(sq.shape)
    return sq


# ===== Plain (non-recorded) operations =====

def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product; raises DimensionError when a.cols != b.rows"""
    _require_conform(a, b)
    return freeze(a @ b)


def hadamard(a: Matrix, b: Matrix) -> Matrix:
    """Entrywise product of equally shaped matrices"""
    _require_same_shape(a, b, "hadamard")
    return freeze(a * b)


def row_sum(a: Matrix) -> Matrix:
    """Column vector of row sums (right-multiplication by the ones vector)"""
    return freeze(np.sum(a, axis=1, keepdims=True))


def elementwise(
    a: Matrix,
    kind: str,
    other: Optional[Matrix] = None,
    factor: Number = 1.0,
    tolerance: float = EPS_CLAMP
) -> Union[Matrix, float]:
    """
    Entrywise operations on matrices

    Args:
        a: Input matrix
        kind: One of sqrt, divide-safe, scale, add, subtract, mean-all
        other: Second operand for divide-safe/add/subtract
        factor: Multiplier for scale
        tolerance: Clamp threshold for sqrt

    Returns:
        Matrix, or a float for mean-all
    """
    if kind == "sqrt":
        return freeze(_checked_sqrt(a, tolerance))
    if kind == "scale":
        return freeze(a * float(factor))
    if kind == "mean-all":
        return float(np.mean(a))
    if kind in ("divide-safe", "add", "subtract"):
        if other is None:
            raise ContractError(f"elementwise '{kind}' needs a second operand")
        _require_same_shape(a, other, kind)
        if kind == "add":
            return freeze(a + other)
        if kind == "subtract":
            return freeze(a - other)
        return freeze(_safe_quotient(a, other))
    raise ContractError(f"Unknown elementwise kind '{kind}', expected one of {ELEMENTWISE_KINDS}")


# ===== Tape =====

class Var:
    """Handle to one node of a Tape"""
    __slots__ = ("tape", "index", "value", "constant")

    def __init__(self, tape: "Tape", index: int, value: Matrix, constant: bool):
        self.tape = tape
        self.index = index
        self.value = value
        self.constant = constant

    @property
    def shape(self) -> Tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise ContractError(f"item() on non-scalar node of shape {self.shape}")
        return float(self.value[0, 0])

    def __repr__(self) -> str:
        kind = self.tape.nodes[self.index].kind
        return f"Var(#{self.index} {kind} {self.shape}{' const' if self.constant else ''})"

    def __matmul__(self, other: "Var") -> "Var":
        return self.tape.matmul(self, other)

    def __add__(self, other: "Var") -> "Var":
        return self.tape.add(self, other)

    def __sub__(self, other: "Var") -> "Var":
        return self.tape.subtract(self, other)

    def __mul__(self, other: Union["Var", Number]) -> "Var":
        if isinstance(other, Var):
            return self.tape.hadamard(self, other)
        return self.tape.scale(self, other)

    def __rmul__(self, other: Number) -> "Var":
        return self.tape.scale(self, other)

    def __neg__(self) -> "Var":
        return self.tape.scale(self, -1.0)


class _Node:
    __slots__ = ("kind", "parents", "backward", "constant")

    def __init__(self, kind: str, parents: Tuple[int, ...], backward, constant: bool):
        self.kind = kind
        self.parents = parents
        self.backward = backward
        self.constant = constant


class Tape:
    """
    Record of primitive operations for reverse-mode differentiation

    Example:
        tape = Tape()
        m = tape.leaf(np.ones((2, 2)))
        loss = tape.mean_all(m * m)
        tape.backward(loss)
        tape.grad(m)  # 2m / 4
    """

    def __init__(self):
        self.nodes: List[_Node] = []
        self.values: List[Matrix] = []
        self._grads: Dict[int, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def _push(self, kind: str, value: np.ndarray, parents: Sequence[Var], backward) -> Var:
        for p in parents:
            if p.tape is not self:
                raise ContractError(f"{kind}: operand belongs to a different tape")
        value = freeze(value)
        constant = all(p.constant for p in parents)
        node = _Node(kind, tuple(p.index for p in parents), None if constant else backward, constant)
        self.nodes.append(node)
        self.values.append(value)
        return Var(self, len(self.nodes) - 1, value, constant)

    # ----- leaves -----

    def leaf(self, value, constant: bool = False, name: str = "leaf") -> Var:
        """Register an input matrix; constant leaves never receive gradient"""
        mat = as_matrix(value, name=name)
        record(mat.shape)
        self.nodes.append(_Node("leaf", (), None, constant))
        self.values.append(mat)
        return Var(self, len(self.nodes) - 1, mat, constant)

    def constant(self, value, name: str = "constant") -> Var:
        return self.leaf(value, constant=True, name=name)

    # ----- linear algebra -----

    def matmul(self, a: Var, b: Var) -> Var:
        _require_conform(a.value, b.value)
        av, bv = a.value, b.value
        return self._push("matmul", av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))

    def hadamard(self, a: Var, b: Var) -> Var:
        _require_same_shape(a.value, b.value, "hadamard")
        av, bv = a.value, b.value
        return self._push("hadamard", av * bv, (a, b), lambda g: (g * bv, g * av))

    def add(self, a: Var, b: Var) -> Var:
        _require_same_shape(a.value, b.value, "add")
        return self._push("add", a.value + b.value, (a, b), lambda g: (g, g))

    def subtract(self, a: Var, b: Var) -> Var:
        _require_same_shape(a.value, b.value, "subtract")
        return self._push("subtract", a.value - b.value, (a, b), lambda g: (g, -g))

    def scale(self, a: Var, factor: Number) -> Var:
        c = float(factor)
        return self._push("scale", a.value * c, (a,), lambda g: (g * c,))

    def add_bias(self, a: Var, bias: Var) -> Var:
        """Add a 1 x k row vector to every row of an n x k matrix"""
        if bias.shape[0] != 1 or bias.shape[1] != a.shape[1]:
            raise DimensionError(f"add_bias: bias {bias.shape} does not fit {a.shape}")
        return self._push(
            "add_bias", a.value + bias.value, (a, bias),
            lambda g: (g, np.sum(g, axis=0, keepdims=True))
        )

    # ----- reductions -----

    def row_sum(self, a: Var) -> Var:
        shape = a.shape
        return self._push(
            "row_sum", np.sum(a.value, axis=1, keepdims=True), (a,),
            lambda g: (np.broadcast_to(g, shape).copy(),)
        )

    def sum_all(self, a: Var) -> Var:
        shape = a.shape
        return self._push(
            "sum_all", np.sum(a.value).reshape(1, 1), (a,),
            lambda g: (np.full(shape, g[0, 0]),)
        )

    def mean_all(self, a: Var) -> Var:
        shape = a.shape
        size = a.value.size
        return self._push(
            "mean_all", np.mean(a.value).reshape(1, 1), (a,),
            lambda g: (np.full(shape, g[0, 0] / size),)
        )

    # ----- nonlinear entrywise -----

    def sqrt(self, a: Var, tolerance: float = EPS_CLAMP) -> Var:
        """Square root with entries in [-tolerance, 0) clamped to 0; gradient 0 at 0"""
        out = _checked_sqrt(a.value, tolerance)
        return self._push(
            "sqrt", out, (a,),
            lambda g: (g * _safe_quotient(np.full_like(out, 0.5), out),)
        )

    def divide_safe(self, a: Var, b: Var) -> Var:
        """Entrywise a / b with x/0 := 0; zero gradient on that branch"""
        _require_same_shape(a.value, b.value, "divide-safe")
        av, bv = a.value, b.value

        def backward(g):
            return _safe_quotient(g, bv), -_safe_quotient(g * av, bv * bv)

        return self._push("divide_safe", _safe_quotient(av, bv), (a, b), backward)

    def relu(self, a: Var) -> Var:
        mask = (a.value > 0).astype(np.float64)
        return self._push("relu", a.value * mask, (a,), lambda g: (g * mask,))

    def tanh(self, a: Var) -> Var:
        out = np.tanh(a.value)
        return self._push("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))

    def softmax(self, a: Var) -> Var:
        """Row-wise softmax"""
        shifted = a.value - np.max(a.value, axis=1, keepdims=True)
        e = np.exp(shifted)
        out = e / np.sum(e, axis=1, keepdims=True)
        return self._push(
            "softmax", out, (a,),
            lambda g: (out * (g - np.sum(g * out, axis=1, keepdims=True)),)
        )

    def log_softmax(self, a: Var) -> Var:
        """Row-wise log-softmax"""
        shifted = a.value - np.max(a.value, axis=1, keepdims=True)
        lse = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
        out = shifted - lse
        probs = np.exp(out)
        return self._push(
            "log_softmax", out, (a,),
            lambda g: (g - probs * np.sum(g, axis=1, keepdims=True),)
        )

    def pdist(self, points: Var) -> Var:
        """
        Pairwise Euclidean distance matrix of the rows of `points`

        The gradient at coincident points is taken as 0.
        """
        p = points.value
        dist = np.sqrt(pairwise_sq_distances(p))

        def backward(g):
            s = _safe_quotient(g + g.T, dist)
            return (np.sum(s, axis=1, keepdims=True) * p - s @ p,)

        return self._push("pdist", dist, (points,), backward)

    # ----- differentiation -----

    def backward(self, root: Var) -> Dict[int, np.ndarray]:
        """
        Propagate adjoints from a scalar root to every node

        Args:
            root: 1 x 1 node of this tape

        Returns:
            Mapping of leaf node index to gradient (zeros for constant leaves)
        """
        if root.tape is not self:
            raise ContractError("backward: root belongs to a different tape")
        if root.shape != (1, 1):
            raise ContractError(f"backward: root must be scalar, got shape {root.shape}")

        adjoints: List[Optional[np.ndarray]] = [None] * len(self.nodes)
        adjoints[root.index] = np.ones((1, 1))

        for i in range(root.index, -1, -1):
            node = self.nodes[i]
            g = adjoints[i]
            if g is None or node.constant or node.backward is None:
                continue
            for parent, pg in zip(node.parents, node.backward(g)):
                if self.nodes[parent].constant:
                    continue
                if adjoints[parent] is None:
                    adjoints[parent] = np.array(pg, dtype=np.float64, copy=True)
                    record(adjoints[parent].shape)
                else:
                    adjoints[parent] += pg

        self._grads = {}
        for i, node in enumerate(self.nodes):
            if node.kind != "leaf":
                continue
            shape = self.values[i].shape
            g = adjoints[i]
            if node.constant or g is None:
                g = np.zeros(shape)
            if g.shape != shape:
                raise ContractError(f"adjoint shape {g.shape} differs from value shape {shape}")
            self._grads[i] = g
        return dict(self._grads)

    def grad(self, var: Var) -> np.ndarray:
        """Gradient of the last backward root with respect to a leaf"""
        if var.index not in self._grads:
            raise ContractError(f"No gradient recorded for {var!r}; call backward first")
        return self._grads[var.index]


def finite_diff_check(
    f: Callable[[Tape, Var], Var],
    at,
    step: float = 1e-5
) -> float:
    """
    Compare the tape gradient of a scalar function with central differences

    Args:
        f: Builds a 1 x 1 node from a tape and the input leaf
        at: Point of evaluation
        step: Central-difference step

    Returns:
        max |analytic - central| / (|analytic| + |central| + 1e-12)
    """
    if step <= 0:
        raise ContractError(f"finite_diff_check: step must be > 0, got {step}")
    point = as_matrix(at, name="at")

    tape = Tape()
    x = tape.leaf(point)
    tape.backward(f(tape, x))
    analytic = tape.grad(x)

    def evaluate(m: np.ndarray) -> float:
        t = Tape()
        return f(t, t.leaf(m)).item()

    worst = 0.0
    for idx in np.ndindex(point.shape):
        plus = np.array(point)
        minus = np.array(point)
        plus[idx] += step
        minus[idx] -= step
        central = (evaluate(plus) - evaluate(minus)) / (2.0 * step)
        a = analytic[idx]
        err = abs(a - central) / (abs(a) + abs(central) + 1e-12)
        worst = max(worst, err)
    logger.debug(f"finite_diff_check over {point.size} entries: max relative error {worst:.3e}")
    return worst
