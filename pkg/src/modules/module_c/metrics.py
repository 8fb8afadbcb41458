"""
Training losses and evaluation metrics
"""
import logging
from typing import Any, Dict, Hashable, List, Optional, Sequence

import numpy as np

from src.exceptions import DimensionError, InputError
from src.modules.module_a.distance import one_hot
from src.utils.matrix_engine import Tape, Var

logger = logging.getLogger(__name__)


def loss(tape: Tape, outputs: Var, targets, head: str) -> Var:
    """
    Mean squared error (linear head) or softmax cross-entropy (logits head)

    Args:
        tape: Tape holding `outputs`
        outputs: n x 1 regression outputs or n x k logits
        targets: Length-n targets (class indices for logits)
        head: "linear" or "logits"
    """
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    n = outputs.shape[0]
    if targets.size != n:
        raise DimensionError(f"{targets.size} targets for {n} outputs")

    if head == "linear":
        diff = outputs - tape.constant(targets.reshape(-1, 1), name="targets")
        return tape.mean_all(diff * diff)

    k = outputs.shape[1]
    if np.any(targets < 0) or np.any(targets >= k):
        raise InputError(f"class index out of range [0, {k})")
    picked = tape.constant(one_hot(targets, k), name="targets") * tape.log_softmax(outputs)
    return tape.scale(tape.sum_all(picked), -1.0 / n)


def r2_score(targets, predictions) -> float:
    """Coefficient of determination 1 - SS_res / SS_tot"""
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    ss_res = float(np.sum((y - p) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return 1.0 - ss_res / ss_tot


def balanced_accuracy(targets, predicted_labels) -> float:
    """Mean per-class recall over the classes present in `targets`"""
    y = np.asarray(targets).astype(np.int64).reshape(-1)
    p = np.asarray(predicted_labels).astype(np.int64).reshape(-1)
    recalls = [float(np.mean(p[y == c] == c)) for c in np.unique(y)]
    return float(np.mean(recalls)) if recalls else 0.0


def group_accuracies(targets, predicted_labels, groups: Sequence[Hashable]) -> Dict[str, float]:
    """
    Accuracy per (target, bias) group

    Every combination of observed target classes and observed bias values
    is a candidate group; empty ones are excluded with a warning.
    """
    y = np.asarray(targets).astype(np.int64).reshape(-1)
    p = np.asarray(predicted_labels).astype(np.int64).reshape(-1)
    bias_keys = [tuple(np.atleast_1d(g).tolist()) for g in groups]
    out: Dict[str, float] = {}
    for cls in np.unique(y):
        for key in sorted(set(bias_keys)):
            mask = np.asarray([(yy == cls and bk == key) for yy, bk in zip(y, bias_keys)])
            name = f"y={int(cls)}|b={','.join(str(int(v)) for v in key)}"
            if not mask.any():
                logger.warning(f"Group {name} is empty and is excluded")
                continue
            out[name] = float(np.mean(p[mask] == y[mask]))
    return out


def worst_group_accuracy(targets, predicted_labels, groups: Sequence[Hashable]) -> float:
    accs = group_accuracies(targets, predicted_labels, groups)
    return min(accs.values()) if accs else 0.0


def evaluate(
    predictions: np.ndarray,
    targets,
    head: str,
    bias: Optional[np.ndarray] = None,
    bias_categorical: bool = False
) -> Dict[str, Any]:
    """
    Task metrics of a set of predictions

    Args:
        predictions: (n,) regression outputs or (n, k) class probabilities
        targets: Length-n targets
        head: "linear" or "logits"
        bias: n x b bias attributes (for worst-group accuracy)
        bias_categorical: Whether the bias columns take discrete values

    Returns:
        r2/mse for regression; accuracy, balanced accuracy and (categorical
        bias) worst-group accuracy for classification
    """
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if head == "linear":
        p = np.asarray(predictions, dtype=np.float64).reshape(-1)
        return {"r2": r2_score(y, p), "mse": float(np.mean((y - p) ** 2))}

    labels = np.argmax(np.asarray(predictions), axis=1)
    metrics: Dict[str, Any] = {
        "accuracy": float(np.mean(labels == y.astype(np.int64))),
        "balanced_accuracy": balanced_accuracy(y, labels)
    }
    if bias is not None and bias_categorical:
        groups: List = [tuple(row) for row in np.asarray(bias)]
        accs = group_accuracies(y, labels, groups)
        metrics["group_accuracies"] = accs
        metrics["worst_group_accuracy"] = min(accs.values()) if accs else 0.0
    return metrics
