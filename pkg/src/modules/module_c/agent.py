"""
Module C - Penalized Trainer
Trains predictors on task loss + lambda * sDISCO over the lambda x bandwidth grid
"""
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime
from itertools import product
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from tqdm import tqdm

from src.config import RUNS_DIR, worker_count
from src.models import TrainConfig, TrainRunConfig, TrainSummary
from src.modules.module_a.disco_config import BANDWIDTH_GRID
from src.modules.module_b.storage import load_dataset
from src.utils.console import fmt, section
from .metrics import evaluate
from .predictor import save_checkpoint
from .trainer_config import LAMBDA_GRID
from .trainer import TrainData, fit, get_metrics_logger, resolve_bandwidth

logger = logging.getLogger(__name__)


def _run_name(penalty_weight: float, bandwidth: Optional[float]) -> str:
    bw = "auto" if bandwidth is None else f"{bandwidth:g}"
    return f"lambda_{penalty_weight:g}__bw_{bw}"


def run_single(
    train_path: str,
    val_path: str,
    test_path: Optional[str],
    cfg: TrainConfig,
    run_dir: str,
    progress: bool = True
) -> Dict[str, Any]:
    """
    One grid cell: load data, fit, save checkpoint and metrics

    Top-level so worker processes can pickle it; every run writes only into `run_dir`.
    """
    run_dir = Path(run_dir)
    run_name = run_dir.name
    train = TrainData.from_dataset(load_dataset(Path(train_path)), cfg.bias_columns)
    val = TrainData.from_dataset(load_dataset(Path(val_path)), cfg.bias_columns)

    bandwidth = resolve_bandwidth(cfg, train)
    metrics_logger = get_metrics_logger(run_dir, run_name)
    try:
        result = fit(train, val, cfg, bandwidth=bandwidth, run_name=run_name,
                     metrics_logger=metrics_logger, progress=progress)
    finally:
        for handler in list(metrics_logger.handlers):
            metrics_logger.removeHandler(handler)
            handler.close()

    checkpoint = save_checkpoint(result.predictor, run_dir / "model.dprd")

    test_metrics: Dict[str, Any] = {}
    if test_path:
        test = TrainData.from_dataset(load_dataset(Path(test_path)), cfg.bias_columns)
        test_metrics = evaluate(
            result.predictor.predict(test.features), test.labels, test.head,
            bias=test.bias, bias_categorical=test.bias_categorical
        )
        test_metrics.pop("group_accuracies", None)

    summary = TrainSummary(
        run=run_name,
        penalty_weight=cfg.penalty_weight,
        bandwidth=bandwidth,
        best_epoch=result.best_epoch,
        val_metric=result.best_metric,
        val_metric_name=result.metric_name,
        test_metrics=test_metrics,
        checkpoint=str(checkpoint)
    )
    with open(run_dir / "summary.json", "w", encoding="utf-8") as f:
        json.dump(summary.model_dump(), f, ensure_ascii=False, indent=2)
    return summary.model_dump()


class ModuleC:
    """
    Training stage

    Expands the run config into the lambda x bandwidth grid, fits one
    predictor per cell (sequentially or in worker processes) and selects
    the cell with the best unbiased-validation metric.
    """

    def __init__(self, output_dir: Path = RUNS_DIR, workers: Optional[int] = None):
        """
        Initialize Module C

        Args:
            output_dir: Directory holding one sub-directory per run
            workers: Parallel worker processes (DISCO_WORKERS when None)
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.workers = workers

    def grid(self, config: TrainRunConfig) -> List[Tuple[str, TrainConfig]]:
        """(run name, config) for every lambda x bandwidth cell, in grid order"""
        lambdas = config.lambda_grid or (LAMBDA_GRID if config.full_grid else [config.train.penalty_weight])
        bandwidths = config.bandwidth_grid or (BANDWIDTH_GRID if config.full_grid else [config.train.bandwidth])
        cells = []
        for lam, bw in product(lambdas, bandwidths):
            cfg = config.train.model_copy(update={"penalty_weight": lam, "bandwidth": bw})
            cells.append((_run_name(lam, bw), cfg))
        return cells

    def run(self, config: TrainRunConfig) -> Dict[str, Any]:
        """
        Train every grid cell and pick the best

        Args:
            config: Validated training run config

        Returns:
            {"runs": [...], "best": {...}}
        """
        for path in filter(None, (config.train_path, config.val_path, config.test_path)):
            if not Path(path).exists():
                raise FileNotFoundError(f"Dataset not found: {path}")

        cells = self.grid(config)
        workers = min(config.workers or self.workers or worker_count(), len(cells))
        logger.info(f"Training {len(cells)} run(s) with {workers} worker(s)")

        jobs = [
            (config.train_path, config.val_path, config.test_path, cfg, str(self.output_dir / name))
            for name, cfg in cells
        ]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(run_single, *job, False) for job in jobs]
                runs = [f.result() for f in tqdm(futures, desc="Grid runs", unit="run")]
        else:
            runs = [run_single(*job, progress=len(jobs) == 1)
                    for job in tqdm(jobs, desc="Grid runs", unit="run", disable=len(jobs) == 1)]

        # first cell in grid order wins ties
        best = runs[0]
        for r in runs[1:]:
            if r["val_metric"] > best["val_metric"]:
                best = r

        results = {"timestamp": datetime.now().isoformat(), "runs": runs, "best": best}
        self._save_results(results)
        return results

    def _save_results(self, results: Dict[str, Any]) -> Path:
        """
        Save grid summary to JSON file

        Args:
            results: Runs and best run

        Returns:
            Path to saved file
        """
        output_path = self.output_dir / "module_c_training.json"
        with open(output_path, "w", encoding="utf-8") as f:
            json.dump(results, f, ensure_ascii=False, indent=2)
        print(f"  -> Results saved: {output_path.name}")
        return output_path

    def print_summary(self, results: Dict[str, Any]) -> None:
        """Print human-readable summary to console"""
        section("MODULE C: TRAINING SUMMARY")
        for r in results["runs"]:
            marker = "*" if r["run"] == results["best"]["run"] else " "
            test = ", ".join(f"{k}={fmt(v)}" for k, v in r["test_metrics"].items())
            print(f"  {marker} {r['run']}: {r['val_metric_name']}={fmt(r['val_metric'])} "
                  f"(epoch {r['best_epoch']}){'  test: ' + test if test else ''}")
        print(f"\n    Best checkpoint: {results['best']['checkpoint']}")
        print()
