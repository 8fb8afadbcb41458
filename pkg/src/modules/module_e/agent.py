"""
Module E - Scaling Benchmark
Times the naive full-reference estimator against single-shot sDISCO
"""
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

from tqdm import tqdm

from src.config import REPORTS_DIR
from src.models import BenchConfig
from src.utils.console import fmt, section, status
from .benchmark import run_benchmark, summarize, to_frame

logger = logging.getLogger(__name__)


class ModuleE:
    """
    Benchmark stage

    For every n runs the per-row naive loop, sDISCO and (small n) the
    broadcast estimator on identical inputs, then writes the BenchRecord
    table as CSV with a JSON summary next to it.
    """

    def __init__(self, output_dir: Path = REPORTS_DIR):
        """
        Initialize Module E

        Args:
            output_dir: Directory for the CSV table and summary
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def run(self, config: BenchConfig, out: Optional[Path] = None) -> Dict[str, Any]:
        """
        Run the benchmark

        Args:
            config: Validated bench config
            out: CSV path (config.out, then output_dir/bench.csv)

        Returns:
            {"records": [...], "summary": {...}, "csv": path}
        """
        records = run_benchmark(config, progress=lambda sizes: tqdm(sizes, desc="Benchmark", unit="n"))
        csv_path = Path(out or config.out or self.output_dir / "bench.csv")
        results = {
            "timestamp": datetime.now().isoformat(),
            "sizes": config.sizes,
            "reps": config.reps,
            "records": [r.model_dump() for r in records],
            "summary": summarize(records),
            "csv": str(csv_path)
        }
        self._save_results(results, records)
        return results

    def _save_results(self, results: Dict[str, Any], records) -> Path:
        """
        Save the CSV table and the JSON summary

        Args:
            results: Benchmark results
            records: BenchRecord list

        Returns:
            Path to the CSV file
        """
        csv_path = Path(results["csv"])
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        to_frame(records).to_csv(csv_path, index=False)
        summary_path = csv_path.with_suffix(".json")
        with open(summary_path, "w", encoding="utf-8") as f:
            json.dump(results, f, ensure_ascii=False, indent=2)
        print(f"  -> Results saved: {csv_path.name}, {summary_path.name}")
        return csv_path

    def print_summary(self, results: Dict[str, Any]) -> None:
        """Print human-readable summary to console"""
        section("MODULE E: BENCHMARK SUMMARY")
        print(f"    {'estimator':<10} {'n':>6} {'seconds':>10} {'peak floats':>14}  checksum")
        for r in results["records"]:
            print(f"    {r['estimator']:<10} {r['n']:>6} {r['seconds']:>10.4f} {r['peak_floats']:>14}  {r['checksum']}")
        s = results["summary"]
        print()
        print(f"    {status(s['allocation_exponent_ok'], 'sDISCO allocation exponent ' + fmt(s['allocation_exponent'], 3))}")
        trend = ", ".join(f"n={n}: {fmt(v, 1)}x" for n, v in s["speedup"].items())
        print(f"    {status(s['speedup_increasing'], 'naive / sDISCO time ' + (trend or '-'))}")
        print(f"    {status(s['all_checksums_equal'], 'naive and sDISCO agree after rounding')}")
        print()
