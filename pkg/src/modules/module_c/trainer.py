"""
Penalized training loop: task loss + lambda * conditional dependence penalty
"""
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pythonjsonlogger import jsonlogger
from tqdm import tqdm

from src.config import METRICS_LOGGER
from src.exceptions import ConfigurationError
from src.models import EpochRecord, TrainConfig
from src.modules.module_a.disco import default_m, penalty
from src.modules.module_a.disco_config import MIN_BATCH
from src.modules.module_a.distance import median_heuristic
from src.modules.module_b.generators import Dataset
from src.utils.matrix_engine import Tape, Var
from src.utils.rng import stream
from .metrics import evaluate, loss
from .optimizer import make_optimizer
from .predictor import Predictor, forward, init_predictor
from .trainer_config import BANDWIDTH_SAMPLE, CLASSIFICATION_METRIC, GROUP_METRIC, REGRESSION_METRIC

logger = logging.getLogger(__name__)


@dataclass
class TrainData:
    """Array view of a dataset as seen by the trainer"""
    features: np.ndarray
    labels: np.ndarray
    bias: np.ndarray
    condition: np.ndarray
    head: str
    n_classes: Optional[int]
    bias_names: List[str]
    bias_categorical: bool

    def __len__(self) -> int:
        return len(self.labels)

    @classmethod
    def from_dataset(cls, dataset: Dataset, bias_columns: Optional[Sequence[str]] = None) -> "TrainData":
        """
        Build the trainer view; `bias_columns` selects which attributes the penalty sees
        """
        family = dataset.family
        names = list(bias_columns) if bias_columns else dataset.bias_names
        return cls(
            features=dataset.features(),
            labels=dataset.labels(),
            bias=dataset.bias(names),
            condition=dataset.condition(),
            head=family.head,
            n_classes=family.n_classes,
            bias_names=names,
            bias_categorical=all(family.is_categorical(b) for b in names)
        )

    def subset(self, idx: np.ndarray) -> "TrainData":
        return TrainData(
            features=self.features[idx],
            labels=self.labels[idx],
            bias=self.bias[idx],
            condition=self.condition[idx],
            head=self.head,
            n_classes=self.n_classes,
            bias_names=self.bias_names,
            bias_categorical=self.bias_categorical
        )

    @property
    def output_dim(self) -> int:
        return int(self.n_classes) if self.head == "logits" else 1


@dataclass
class FitResult:
    predictor: Predictor
    best_epoch: int
    best_metric: float
    metric_name: str
    history: List[EpochRecord] = field(default_factory=list)


def get_metrics_logger(run_dir: Path, run_name: str) -> logging.Logger:
    """JSON-lines logger writing one record per epoch to run_dir/metrics.jsonl"""
    metrics_logger = logging.getLogger(f"{METRICS_LOGGER}.{run_name}")
    metrics_logger.setLevel(logging.INFO)
    metrics_logger.propagate = False
    for handler in list(metrics_logger.handlers):
        metrics_logger.removeHandler(handler)
        handler.close()
    run_dir.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(run_dir / "metrics.jsonl", mode="w", encoding="utf-8")
    handler.setFormatter(jsonlogger.JsonFormatter("%(message)s"))
    metrics_logger.addHandler(handler)
    return metrics_logger


def resolve_bandwidth(cfg: TrainConfig, data: TrainData) -> float:
    """Configured bandwidth, or the median heuristic over (a prefix of) the training targets"""
    if cfg.bandwidth is not None:
        return float(cfg.bandwidth)
    return median_heuristic(data.condition[:BANDWIDTH_SAMPLE])


def penalty_points(tape: Tape, outputs: Var, head: str) -> Var:
    """Raw outputs for regression, softmax probabilities for classification"""
    return tape.softmax(outputs) if head == "logits" else outputs


def train_step(
    predictor: Predictor,
    batch: TrainData,
    cfg: TrainConfig,
    optimizer,
    bandwidth: float,
    step_seed: int = 0
) -> Dict[str, Optional[float]]:
    """
    One optimizer update on task loss + lambda * penalty

    Args:
        predictor: Model, updated in place
        batch: Mini-batch
        cfg: Training config
        optimizer: Adam or SGD instance
        bandwidth: Kernel bandwidth over the targets
        step_seed: Seed of the DISCO_m reference sample

    Returns:
        {"task_loss", "penalty"}; penalty is None when the batch is too small to evaluate it
    """
    n = len(batch)
    uses_penalty = cfg.penalty_weight > 0 and cfg.estimator != "none"
    if uses_penalty and n < MIN_BATCH:
        raise ConfigurationError(f"batch of {n} is too small for the penalty (need >= {MIN_BATCH})")

    tape = Tape()
    outputs, params = forward(predictor, batch.features, tape)
    task = loss(tape, outputs, batch.labels, batch.head)

    penalty_value = None
    objective = task
    if n >= MIN_BATCH:
        estimator = "sdisco" if cfg.estimator == "none" else cfg.estimator
        pen = penalty(
            penalty_points(tape, outputs, batch.head),
            batch.bias,
            batch.condition,
            bandwidth,
            estimator=estimator,
            m=default_m(n, cfg.m_fraction),
            seed=step_seed
        )
        penalty_value = pen.item()
        if uses_penalty:
            objective = task + tape.scale(pen, cfg.penalty_weight)

    tape.backward(objective)
    optimizer.step(predictor.parameters, [tape.grad(p) for p in params])
    return {"task_loss": task.item(), "penalty": penalty_value}


def validation_metric(predictor: Predictor, data: TrainData) -> Tuple[str, float, Dict[str, Any]]:
    """Model-selection metric: R2, worst-group accuracy (categorical bias) or balanced accuracy"""
    metrics = evaluate(
        predictor.predict(data.features), data.labels, data.head,
        bias=data.bias, bias_categorical=data.bias_categorical
    )
    if data.head == "linear":
        name = REGRESSION_METRIC
    elif GROUP_METRIC in metrics:
        name = GROUP_METRIC
    else:
        name = CLASSIFICATION_METRIC
    return name, float(metrics[name]), metrics


def fit(
    train: TrainData,
    val: TrainData,
    cfg: TrainConfig,
    bandwidth: Optional[float] = None,
    run_name: str = "run",
    metrics_logger: Optional[logging.Logger] = None,
    progress: bool = True
) -> FitResult:
    """
    Train a fresh predictor and keep the best epoch on the validation set

    Args:
        train: Training data (shuffled uniformly every epoch)
        val: Unbiased validation data
        cfg: Training config
        bandwidth: Kernel bandwidth (resolved from cfg/targets when None)
        run_name: Label of the run in logs
        metrics_logger: JSON-lines logger for per-epoch records
        progress: Show a tqdm bar over epochs

    Returns:
        FitResult with the best predictor and the epoch history
    """
    bandwidth = resolve_bandwidth(cfg, train) if bandwidth is None else float(bandwidth)
    predictor = init_predictor(
        train.features.shape[1], cfg.hidden, train.output_dim,
        activation=cfg.activation, head=train.head, seed=cfg.seed
    )
    optimizer = make_optimizer(cfg.optimizer, cfg.learning_rate)
    n = len(train)
    steps_per_epoch = max(1, math.ceil(n / cfg.batch_size))

    best: Optional[FitResult] = None
    history: List[EpochRecord] = []
    epochs = tqdm(range(cfg.epochs), desc=run_name, unit="epoch", disable=not progress)
    for epoch in epochs:
        started = time.perf_counter()
        order = stream(cfg.seed, "shuffle", epoch).permutation(n)
        losses, penalties = [], []
        for step in range(steps_per_epoch):
            idx = order[step * cfg.batch_size:(step + 1) * cfg.batch_size]
            # trailing batch too small for the penalty
            if len(idx) < MIN_BATCH and cfg.penalty_weight > 0 and cfg.estimator != "none":
                continue
            step_seed = int(stream(cfg.seed, "disco_m", epoch, step).integers(2 ** 31))
            out = train_step(predictor, train.subset(idx), cfg, optimizer, bandwidth, step_seed)
            losses.append(out["task_loss"])
            if out["penalty"] is not None:
                penalties.append(out["penalty"])

        metric_name, metric, _ = validation_metric(predictor, val)
        record = EpochRecord(
            run=run_name,
            epoch=epoch,
            task_loss=float(np.mean(losses)) if losses else float("nan"),
            penalty=float(np.mean(penalties)) if penalties else float("nan"),
            val_metric=metric,
            val_metric_name=metric_name,
            seconds=time.perf_counter() - started
        )
        history.append(record)
        if metrics_logger is not None:
            metrics_logger.info("epoch", extra=record.model_dump())
        epochs.set_postfix(loss=f"{record.task_loss:.4f}", pen=f"{record.penalty:.4f}", val=f"{metric:.4f}")

        if best is None or metric > best.best_metric:
            best = FitResult(predictor.copy(), epoch, metric, metric_name)

    best.history = history
    best.predictor.meta.update({
        "run": run_name,
        "best_epoch": best.best_epoch,
        "bandwidth": bandwidth,
        "lambda": cfg.penalty_weight,
        "estimator": cfg.estimator,
        "bias_columns": train.bias_names
    })
    logger.info(f"{run_name}: best epoch {best.best_epoch} with {best.metric_name}={best.best_metric:.4f}")
    return best
