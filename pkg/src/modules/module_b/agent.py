"""
Module B - Dataset Generator
Draws seeded datasets from the SCM families and writes containers, CSV and previews
"""
import hashlib
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List

from tqdm import tqdm

from src.config import DATASETS_DIR
from src.models import DatasetSpec, GenConfig
from src.utils.console import fmt, section, status
from src.utils.raster import save_preview
from .generators import generate_dataset, positivity_report
from .storage import export_csv, save_dataset

logger = logging.getLogger(__name__)

IMAGE_FAMILIES = ("blob", "dsprites")


class ModuleB:
    """
    Dataset generation stage

    For every split of a GenConfig:
    - draws the units (selection and label noise included)
    - writes the .dscm container and a CSV export
    - reports the positivity (overlap) diagnostic
    - saves a PNG preview for image families
    """

    def __init__(self, output_dir: Path = DATASETS_DIR, preview: int = 16):
        """
        Initialize Module B

        Args:
            output_dir: Directory for dataset files
            preview: Number of sample images in the PNG preview (0 disables)
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.preview = preview

    def generate(self, name: str, spec: DatasetSpec) -> Dict[str, Any]:
        """
        Generate one split and write its files

        Args:
            name: Split name (file stem)
            spec: Dataset spec

        Returns:
            Summary of the written split
        """
        dataset = generate_dataset(spec)
        dataset_path = save_dataset(dataset, self.output_dir / f"{name}.dscm")
        csv_path = export_csv(dataset, self.output_dir / f"{name}.csv")
        positivity = positivity_report(dataset)

        files = {"dataset": str(dataset_path), "csv": str(csv_path)}
        if spec.family in IMAGE_FAMILIES and self.preview > 0:
            side = int(round(dataset.units[0].features.size ** 0.5))
            shown = dataset.units[:self.preview]
            preview_path = save_preview(
                [u.features.reshape(side, side) for u in shown],
                self.output_dir / f"{name}_preview.png",
                labels=[f"{u.label:.2f}" for u in shown]
            )
            files["preview"] = str(preview_path)

        return {
            "name": name,
            "family": spec.family,
            "bias_mode": spec.bias_mode,
            "n": len(dataset),
            "seed": spec.seed,
            "retained_fraction": dataset.retained_fraction,
            "positivity": positivity,
            "sha256": hashlib.sha256(dataset_path.read_bytes()).hexdigest(),
            "files": files
        }

    def run(self, config: GenConfig) -> List[Dict[str, Any]]:
        """Generate every split of a config and save the summary"""
        results = []
        for split in tqdm(config.splits, desc="Generating splits", unit="split"):
            results.append(self.generate(split.name, split.dataset))
        self._save_results(results)
        return results

    def _save_results(self, results: List[Dict[str, Any]]) -> Path:
        """
        Save generation summary to JSON file

        Args:
            results: Per-split summaries

        Returns:
            Path to saved file
        """
        output_path = self.output_dir / "module_b_generation.json"
        with open(output_path, "w", encoding="utf-8") as f:
            json.dump(
                {"timestamp": datetime.now().isoformat(), "splits": results},
                f, ensure_ascii=False, indent=2
            )
        print(f"  -> Results saved: {output_path.name}")
        return output_path

    def print_summary(self, results: List[Dict[str, Any]]) -> None:
        """
        Print human-readable summary to console

        Args:
            results: Per-split summaries
        """
        section("MODULE B: DATASET GENERATION SUMMARY")
        for r in results:
            print(f"    {r['name']}: {r['family']} ({r['bias_mode']}), n={r['n']}, seed={r['seed']}")
            if r["retained_fraction"] < 1.0:
                print(f"      Retained fraction: {fmt(r['retained_fraction'])}")
            pos = r["positivity"]
            print(f"      {status(pos['positive'], 'positivity min P(b|y) = ' + fmt(pos['min_conditional']))}")
            print(f"      sha256: {r['sha256'][:16]}...")
        print()
