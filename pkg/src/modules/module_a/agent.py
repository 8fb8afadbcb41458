"""
Module A: Dependence Analyzer
Measures (conditional) distance correlation between predictions and bias attributes
"""
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from src.exceptions import EstimatorUndefinedError
from src.utils.console import fmt, section
from .disco import default_m, disco_m, local_statistics_naive, rbf_weights, sdisco
from .disco_config import M_FRACTION, MIN_BATCH
from .distance import dcor2, median_heuristic, pairwise_distance, standardize_columns

logger = logging.getLogger(__name__)

# Above this n the per-row naive oracle is skipped in reports
NAIVE_REPORT_MAX_N = 512


class ModuleA:
    """
    Dependence Analyzer - estimates how much predictions depend on bias attributes

    Reports the unconditional dcor2 and the conditional sDISCO / DISCO_m
    estimates given the targets.
    """

    def __init__(self, output_dir: Optional[Path] = None, m_fraction: float = M_FRACTION):
        """
        Initialize Module A

        Args:
            output_dir: Directory for the JSON report (no file written when None)
            m_fraction: DISCO_m reference share
        """
        self.output_dir = Path(output_dir) if output_dir is not None else None
        self.m_fraction = m_fraction

    def analyze(
        self,
        predictions: np.ndarray,
        bias: np.ndarray,
        condition: np.ndarray,
        bandwidth: Optional[float] = None,
        seed: int = 0,
        label: str = "model"
    ) -> Dict[str, Any]:
        """
        Estimate dependence of predictions on bias given the condition

        Args:
            predictions: n x k predictions (probabilities for classifiers)
            bias: n x b bias attributes
            condition: n x c conditioning values
            bandwidth: Kernel bandwidth (median heuristic when None)
            seed: DISCO_m seed
            label: Name used in the report

        Returns:
            Report with dcor2, sdisco, disco_m (and the naive oracle for small n)
        """
        n = len(predictions)
        if n < MIN_BATCH:
            raise EstimatorUndefinedError(f"need at least {MIN_BATCH} samples, got {n}")
        if bandwidth is None:
            bandwidth = median_heuristic(condition)

        A = pairwise_distance(predictions)
        B = pairwise_distance(standardize_columns(bias))
        W = rbf_weights(condition, bandwidth)
        m = default_m(n, self.m_fraction)

        report = {
            "label": label,
            "timestamp": datetime.now().isoformat(),
            "n": n,
            "bandwidth": bandwidth,
            "dcor2": dcor2(A, B),
            "sdisco": sdisco(A, B, W),
            "disco_m": disco_m(A, B, W, m=m, seed=seed),
            "m": m
        }
        if n <= NAIVE_REPORT_MAX_N:
            report["naive"] = local_statistics_naive(A, B, W).estimate()
        logger.info(f"{label}: sdisco={report['sdisco']:.4f} dcor2={report['dcor2']:.4f} (n={n})")

        if self.output_dir is not None:
            self._save_results(report)
        return report

    def _save_results(self, report: Dict[str, Any]) -> Path:
        """
        Save dependence report to JSON file

        Args:
            report: Analysis report

        Returns:
            Path to saved file
        """
        self.output_dir.mkdir(parents=True, exist_ok=True)
        output_path = self.output_dir / f"module_a_dependence_{report['label']}.json"
        with open(output_path, "w", encoding="utf-8") as f:
            json.dump(report, f, ensure_ascii=False, indent=2)
        print(f"  -> Results saved: {output_path.name}")
        return output_path

    def print_summary(self, report: Dict[str, Any]) -> None:
        """Print human-readable summary to console"""
        section("MODULE A: DEPENDENCE SUMMARY")
        print(f"    Model: {report['label']} (n={report['n']}, bandwidth={fmt(report['bandwidth'])})")
        print(f"    dcor2 (unconditional): {fmt(report['dcor2'])}")
        print(f"    sDISCO:                {fmt(report['sdisco'])}")
        print(f"    DISCO_m (m={report['m']}):      {fmt(report['disco_m'])}")
        if "naive" in report:
            print(f"    Naive oracle:          {fmt(report['naive'])}")
        print()
