"""
Naive full-reference loop versus single-shot sDISCO: time, allocation, agreement
"""
import hashlib
import logging
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.exceptions import ConfigurationError
from src.models import BenchConfig, BenchRecord
from src.modules.module_a.disco import local_statistics_naive, naive_broadcast_dcor, rbf_weights, sdisco
from src.modules.module_a.disco_config import NAIVE_BROADCAST_MAX_N
from src.modules.module_a.distance import median_heuristic, pairwise_distance
from src.utils.allocation import AllocationTracker
from src.utils.rng import stream
from . import bench_config as cfg

logger = logging.getLogger(__name__)


@dataclass
class BenchInputs:
    A: np.ndarray
    B: np.ndarray
    W: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]


def make_inputs(n: int, seed: int) -> BenchInputs:
    """Random predictions, bias and conditioning values; W from the median-heuristic bandwidth"""
    rng = stream(seed, "bench", n)
    predictions = rng.normal(size=(n, cfg.PREDICTION_DIM))
    bias = rng.normal(size=(n, cfg.BIAS_DIM))
    condition = rng.normal(size=(n, cfg.CONDITION_DIM))
    return BenchInputs(
        A=pairwise_distance(predictions),
        B=pairwise_distance(bias),
        W=rbf_weights(condition, median_heuristic(condition))
    )


def checksum(value: float) -> str:
    """Hash of the value rounded to CHECKSUM_DECIMALS decimals"""
    text = f"{round(float(value), cfg.CHECKSUM_DECIMALS):.{cfg.CHECKSUM_DECIMALS}f}"
    return hashlib.sha256(text.encode("ascii")).hexdigest()[:16]


def estimator_fn(name: str) -> Callable[[BenchInputs], float]:
    if name == "naive":
        return lambda x: local_statistics_naive(x.A, x.B, x.W).estimate()
    if name == "sdisco":
        return lambda x: sdisco(x.A, x.B, x.W)
    if name == "broadcast":
        return lambda x: naive_broadcast_dcor(x.A, x.B, x.W)
    raise ConfigurationError(f"unknown estimator '{name}'")


def measure(name: str, inputs: BenchInputs, reps: int) -> Tuple[BenchRecord, float]:
    """
    Time one estimator and count its allocations

    The first run is tracked for allocations; all `reps` runs are timed
    and the mean is reported.
    """
    fn = estimator_fn(name)
    with AllocationTracker() as tracker:
        value = fn(inputs)
    times = []
    for _ in range(reps):
        started = time.perf_counter()
        fn(inputs)
        times.append(time.perf_counter() - started)
    record = BenchRecord(
        estimator=name,
        n=inputs.n,
        seconds=float(np.mean(times)),
        peak_floats=tracker.stats.peak_floats,
        checksum=checksum(value)
    )
    return record, float(value)


def run_benchmark(config: BenchConfig, progress: Optional[Callable] = None) -> List[BenchRecord]:
    """
    Benchmark every estimator at every size

    Args:
        config: Validated bench config
        progress: Optional wrapper over the size iterator (e.g. tqdm)

    Returns:
        One record per (estimator, n) that was run
    """
    records: List[BenchRecord] = []
    sizes = progress(config.sizes) if progress else config.sizes
    for n in sizes:
        inputs = make_inputs(n, config.seed)
        for name in cfg.ESTIMATORS:
            if name == "naive" and n > config.naive_max_n:
                logger.warning(f"n={n}: naive loop skipped (naive_max_n={config.naive_max_n})")
                continue
            if name == "broadcast" and n > NAIVE_BROADCAST_MAX_N:
                continue
            reps = 1 if name == "naive" and n > cfg.NAIVE_SINGLE_REP_N else config.reps
            record, value = measure(name, inputs, reps)
            logger.info(f"n={n} {name}: {record.seconds:.4f}s, {record.peak_floats} floats, value={value:.10f}")
            records.append(record)
    return records


def to_frame(records: List[BenchRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.model_dump() for r in records],
                        columns=["estimator", "n", "seconds", "peak_floats", "checksum"])


def fit_exponent(ns, values) -> float:
    """Slope of log(values) against log(n)"""
    ns = np.asarray(ns, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if len(ns) < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(ns), np.log(values), 1)
    return float(slope)


def summarize(records: List[BenchRecord]) -> Dict[str, object]:
    """
    Allocation exponent of sDISCO, naive/sDISCO speedup per n and checksum agreement
    """
    frame = to_frame(records)
    sd = frame[frame.estimator == "sdisco"].set_index("n").sort_index()
    naive = frame[frame.estimator == "naive"].set_index("n").sort_index()

    exponent = fit_exponent(sd.index.values, sd.peak_floats.values)
    common = sd.index.intersection(naive.index)
    speedup = {int(n): float(naive.loc[n, "seconds"] / sd.loc[n, "seconds"]) for n in common}
    agree = {int(n): bool(naive.loc[n, "checksum"] == sd.loc[n, "checksum"]) for n in common}
    ratios = [speedup[n] for n in sorted(speedup)]
    return {
        "allocation_exponent": exponent,
        "allocation_exponent_ok": bool(abs(exponent - cfg.ALLOCATION_EXPONENT) <= cfg.ALLOCATION_EXPONENT_TOL),
        "speedup": speedup,
        "speedup_increasing": all(b > a for a, b in zip(ratios, ratios[1:])),
        "checksums_equal": agree,
        "all_checksums_equal": all(agree.values()) if agree else True
    }
