"""
Module D - Causal Pathway Analyzer
Counterfactual sensitivity of trained predictors and exact pathway effects on discrete SCMs
"""
import itertools
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from tqdm import tqdm

from src.config import REPORTS_DIR
from src.exceptions import ConfigurationError, EstimatorUndefinedError
from src.models import AnalyzeConfig, ModelEntry, SCMSection, SensitivityRecord
from src.modules.module_a import ModuleA
from src.modules.module_b.families import get_family
from src.modules.module_b.storage import load_dataset
from src.modules.module_c.predictor import Predictor, load_checkpoint
from src.utils.console import fmt, section, status
from src.utils.rng import stream
from .pathway_config import DECOMPOSITION_TOL, THEOREM_TOL
from .pathways import (
    mle_predictor,
    mle_stable_maximizer_check,
    pathway_report,
    random_predictor,
    stability_certificate,
)
from .sam_generator import random_sam
from .scm import DiscreteSCM, PredictorTable, describe, load_scm
from .sensitivity import counterfactual_score, sensitivity

logger = logging.getLogger(__name__)


class ModuleD:
    """
    Analysis stage

    Two independent parts, both driven by an AnalyzeConfig:
    - models + dataset family: S_X per variable, ctf accuracy / R2 and
      held-out conditional dependence, one record per model
    - scm section: exact TV / ctf effects, decomposition residuals,
      stability certificate and randomized theorem sweeps
    """

    def __init__(self, output_dir: Path = REPORTS_DIR):
        """
        Initialize Module D

        Args:
            output_dir: Directory for JSON reports
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    # ===== Trained predictors =====

    def _heldout_dependence(self, model: Predictor, heldout_path: str, name: str) -> Optional[float]:
        dataset = load_dataset(Path(heldout_path))
        names = model.meta.get("bias_columns") or dataset.bias_names
        try:
            report = ModuleA().analyze(
                model.predict(dataset.features()),
                dataset.bias(names),
                dataset.condition(),
                label=name
            )
        except EstimatorUndefinedError as e:
            logger.warning(f"{name}: held-out dependence undefined ({e})")
            return None
        return float(report["sdisco"])

    def analyze_model(self, entry: ModelEntry, config: AnalyzeConfig) -> SensitivityRecord:
        """Sensitivities and counterfactual score of one checkpoint"""
        model = load_checkpoint(Path(entry.checkpoint))
        family = get_family(config.dataset)
        variables = config.variables or list(family.bias)
        sens = {
            v: sensitivity(model, family, v, config.n_units, config.n_interventions, config.seed)
            for v in variables
        }
        metric, score = counterfactual_score(model, family, config.n_units, config.n_interventions, config.seed)
        record = SensitivityRecord(model=entry.name, sensitivities=sens, **{metric: score})
        if config.heldout_path:
            record.heldout_dependence = self._heldout_dependence(model, config.heldout_path, entry.name)
        logger.info(f"{entry.name}: " + ", ".join(f"S_{k}={v:.4f}" for k, v in sens.items()))
        return record

    # ===== Discrete SCMs =====

    def _scm_and_predictor(self, section_cfg: SCMSection) -> Tuple[DiscreteSCM, PredictorTable]:
        if section_cfg.document is not None:
            scm = load_scm(Path(section_cfg.document))
        else:
            scm = random_sam(section_cfg.random_seed)
        choice = section_cfg.predictor
        if choice == "document":
            if scm.predictor is None:
                raise ConfigurationError(f"{section_cfg.document} declares no predictor table")
            predictor = scm.predictor
        elif choice == "mle":
            predictor = mle_predictor(scm)
        elif choice == "constant":
            predictor = PredictorTable.constant(scm)
        else:
            predictor = random_predictor(scm, stream(section_cfg.predictor_seed, "predictor"))
        return scm, predictor

    def theorem_sweep(self, instances: int, seed: int) -> Dict[str, Any]:
        """
        Randomized checks of the decomposition identity and both stability results

        Each instance is a random binary SAM with a random deterministic
        predictor; every fourth instance lets X read Y only, so CI instances
        are well represented.
        """
        max_residual = 0.0
        ci_instances = 0
        ci_stable_ok = True
        mle_ok = True
        for i in tqdm(range(instances), desc="SCM sweep", unit="scm"):
            x_parents = "target_only" if i % 4 == 3 else "all"
            scm = random_sam(seed + i, x_parents=x_parents)
            predictor = random_predictor(scm, stream(seed, "sweep_predictor", i))
            for y0, y1, yhat in itertools.product(range(2), range(2), range(2)):
                report = pathway_report(scm, predictor, y0, y1, yhat)
                max_residual = max(max_residual, report.decomposition_residual)
            cert = stability_certificate(scm, predictor)
            if cert.is_ci:
                ci_instances += 1
                ci_stable_ok &= max(cert.max_ie, cert.max_se, cert.de_spread) <= THEOREM_TOL
            mle_ok &= mle_stable_maximizer_check(scm)
        return {
            "instances": instances,
            "max_decomposition_residual": max_residual,
            "decomposition_holds": max_residual <= DECOMPOSITION_TOL,
            "ci_instances": ci_instances,
            "ci_implies_stability": ci_stable_ok,
            "mle_maximizes_stable": mle_ok
        }

    def analyze_scm(self, section_cfg: SCMSection) -> Dict[str, Any]:
        """Pathway reports for every (y0, y1, yhat) with y0 != y1, plus the certificate"""
        scm, predictor = self._scm_and_predictor(section_cfg)
        k = scm.cardinality[scm.target]
        reports = [
            pathway_report(scm, predictor, y0, y1, yhat).model_dump()
            for y0, y1 in itertools.permutations(range(k), 2)
            for yhat in range(predictor.classes)
        ]
        result: Dict[str, Any] = {
            "scm": describe(scm),
            "predictor": section_cfg.predictor,
            "pathways": reports,
            "certificate": stability_certificate(scm, predictor).model_dump()
        }
        if section_cfg.theorem_instances:
            result["theorem_sweep"] = self.theorem_sweep(section_cfg.theorem_instances, section_cfg.predictor_seed)
        return result

    # ===== Command =====

    def run(self, config: AnalyzeConfig, checkpoint: Optional[Path] = None) -> Dict[str, Any]:
        """
        Analyze every listed model and the optional SCM section

        Args:
            config: Validated analyze config
            checkpoint: Extra checkpoint from the command line

        Returns:
            {"models": [...], "scm": {...}}
        """
        entries = list(config.models)
        if checkpoint is not None:
            entries.append(ModelEntry(name=Path(checkpoint).stem, checkpoint=str(checkpoint)))

        results: Dict[str, Any] = {"timestamp": datetime.now().isoformat(), "models": []}
        if entries:
            if config.dataset is None:
                raise ConfigurationError("analyzing checkpoints requires a 'dataset' section")
            for entry in entries:
                results["models"].append(self.analyze_model(entry, config).model_dump())
        if config.scm is not None:
            results["scm"] = self.analyze_scm(config.scm)

        self._save_results(results, config.output_path)
        return results

    def _save_results(self, results: Dict[str, Any], output_path: Optional[str] = None) -> List[Path]:
        """
        Save the sensitivity array and the pathway report

        Args:
            results: Analysis results
            output_path: Path of the sensitivity array (default in output_dir)

        Returns:
            Paths of saved files
        """
        saved = []
        sens_path = Path(output_path) if output_path else self.output_dir / "module_d_sensitivity.json"
        sens_path.parent.mkdir(parents=True, exist_ok=True)
        with open(sens_path, "w", encoding="utf-8") as f:
            json.dump(results["models"], f, ensure_ascii=False, indent=2)
        saved.append(sens_path)
        if "scm" in results:
            scm_path = sens_path.with_name(sens_path.stem + "_pathways.json")
            with open(scm_path, "w", encoding="utf-8") as f:
                json.dump(results["scm"], f, ensure_ascii=False, indent=2)
            saved.append(scm_path)
        for path in saved:
            print(f"  -> Results saved: {path.name}")
        return saved

    def print_summary(self, results: Dict[str, Any]) -> None:
        """Print human-readable summary to console"""
        section("MODULE D: CAUSAL PATHWAY SUMMARY")
        for r in results["models"]:
            print(f"    {r['model']}:")
            for var, s in r["sensitivities"].items():
                print(f"      S_{var}: {fmt(s)}")
            if r.get("ctf_accuracy") is not None:
                print(f"      Acc_ctf: {fmt(r['ctf_accuracy'])}")
            if r.get("ctf_r2") is not None:
                print(f"      R2_ctf: {fmt(r['ctf_r2'])}")
            if r.get("heldout_dependence") is not None:
                print(f"      Held-out sDISCO: {fmt(r['heldout_dependence'])}")

        scm = results.get("scm")
        if scm:
            worst = max((p["decomposition_residual"] for p in scm["pathways"]), default=0.0)
            cert = scm["certificate"]
            print(f"\n    SCM: target {scm['scm']['target']}, predictor '{scm['predictor']}'")
            print(f"      {status(worst <= DECOMPOSITION_TOL, 'decomposition residual ' + f'{worst:.2e}')}")
            print(f"      {status(cert['is_ci'], 'yhat independent of (W, Z) given Y')}")
            print(f"      max |ctf-IE| {cert['max_ie']:.2e}, max |ctf-SE| {cert['max_se']:.2e}, "
                  f"stable spread {cert['de_spread']:.2e}")
            sweep = scm.get("theorem_sweep")
            if sweep:
                print(f"      {status(sweep['decomposition_holds'], 'sweep decomposition, ' + str(sweep['instances']) + ' instances')}")
                print(f"      {status(sweep['ci_implies_stability'], 'CI implies stability (' + str(sweep['ci_instances']) + ' CI instances)')}")
                print(f"      {status(sweep['mle_maximizes_stable'], 'MLE among CI tables maximizes ctf-stable')}")
        print()
