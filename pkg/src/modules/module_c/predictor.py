"""
Feed-forward predictor on the matrix engine, plus its checkpoint format
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.exceptions import ConfigurationError, DimensionError, InputError
from src.utils.container import read_container, write_container
from src.utils.matrix_engine import Tape, Var
from src.utils.rng import stream
from .trainer_config import CHECKPOINT_MAGIC, CHECKPOINT_VERSION

logger = logging.getLogger(__name__)


@dataclass
class Predictor:
    """
    Multilayer perceptron

    Attributes:
        sizes: Layer widths from input to output
        weights: One (sizes[i], sizes[i+1]) matrix per layer
        biases: One (1, sizes[i+1]) row per layer
        activation: Hidden nonlinearity ("relu" or "tanh")
        head: "linear" (regression) or "logits" (classification)
    """
    sizes: List[int]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activation: str = "relu"
    head: str = "linear"
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.activation not in ("relu", "tanh"):
            raise ConfigurationError(f"Unknown activation '{self.activation}'")
        if self.head not in ("linear", "logits"):
            raise ConfigurationError(f"Unknown head '{self.head}'")
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise DimensionError("one weight matrix and bias row per layer are required")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[i], self.sizes[i + 1]) or b.shape != (1, self.sizes[i + 1]):
                raise DimensionError(
                    f"layer {i}: weight {w.shape} / bias {b.shape} do not conform to sizes {self.sizes}"
                )

    @property
    def parameters(self) -> List[np.ndarray]:
        """Weights and biases interleaved per layer"""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def copy(self) -> "Predictor":
        return Predictor(
            sizes=list(self.sizes),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activation=self.activation,
            head=self.head,
            meta=dict(self.meta)
        )

    def predict(self, features: np.ndarray) -> np.ndarray:
        """
        Evaluate without recording gradients

        Returns:
            (n,) outputs for regression, (n, k) class probabilities for classification
        """
        tape = Tape()
        outputs, _ = forward(self, features, tape)
        if self.head == "logits":
            return np.array(tape.softmax(outputs).value)
        return np.array(outputs.value[:, 0])


def init_predictor(
    input_dim: int,
    hidden: Sequence[int],
    output_dim: int,
    activation: str = "relu",
    head: str = "linear",
    seed: int = 0
) -> Predictor:
    """Glorot-uniform weights, zero biases"""
    sizes = [int(input_dim), *[int(h) for h in hidden], int(output_dim)]
    rng = stream(seed, "init")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros((1, fan_out)))
    return Predictor(sizes=sizes, weights=weights, biases=biases, activation=activation, head=head)


def forward(predictor: Predictor, features, tape: Optional[Tape] = None) -> Tuple[Var, List[Var]]:
    """
    Record a forward pass on a tape

    Args:
        predictor: Model
        features: n x d input
        tape: Tape to record on (a new one when None)

    Returns:
        (outputs, parameter leaves in `predictor.parameters` order)
    """
    tape = tape if tape is not None else Tape()
    x = tape.constant(features, name="features")
    if x.shape[1] != predictor.sizes[0]:
        raise DimensionError(f"features have {x.shape[1]} columns, predictor expects {predictor.sizes[0]}")

    params: List[Var] = []
    h = x
    last = len(predictor.weights) - 1
    for i, (w, b) in enumerate(zip(predictor.weights, predictor.biases)):
        wv = tape.leaf(w, name=f"W{i}")
        bv = tape.leaf(b, name=f"b{i}")
        params.extend([wv, bv])
        h = tape.add_bias(h @ wv, bv)
        if i < last:
            h = tape.relu(h) if predictor.activation == "relu" else tape.tanh(h)
    return h, params


def save_checkpoint(predictor: Predictor, path: Path) -> Path:
    """Write layer sizes, activation, head and float64 weights"""
    header = {
        "sizes": predictor.sizes,
        "activation": predictor.activation,
        "head": predictor.head,
        "meta": predictor.meta
    }
    return write_container(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, header, predictor.parameters)


def load_checkpoint(path: Path) -> Predictor:
    """Read a checkpoint written by `save_checkpoint`"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    header, blocks = read_container(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
    n_layers = len(header["sizes"]) - 1
    if len(blocks) != 2 * n_layers:
        raise InputError(f"{path}: expected {2 * n_layers} weight blocks, found {len(blocks)}")
    return Predictor(
        sizes=[int(s) for s in header["sizes"]],
        weights=[blocks[2 * i] for i in range(n_layers)],
        biases=[blocks[2 * i + 1] for i in range(n_layers)],
        activation=header["activation"],
        head=header["head"],
        meta=header.get("meta", {})
    )
