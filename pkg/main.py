"""
DISCO Toolkit - Main Entry Point
Wires dataset generation, penalized training, pathway analysis and the scaling benchmark
"""
import argparse
import logging
import sys
import traceback
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

# Add src to path
sys.path.insert(0, str(Path(__file__).parent))

from src.config import (
    DATASETS_DIR,
    EXIT_CODES,
    LOG_FILE,
    REPORTS_DIR,
    RUNS_DIR,
    seed_override,
    validate_config
)
from src.exceptions import DiscoError
from src.models import AnalyzeConfig, BenchConfig, GenConfig, TrainRunConfig, load_config
from src.modules.module_b import ModuleB
from src.modules.module_c import ModuleC
from src.modules.module_d import ModuleD
from src.modules.module_e import ModuleE
from src.utils.rng import derived_seeds

logger = logging.getLogger("disco.main")


class DiscoOrchestrator:
    """Runs one CLI command end to end and prints its summary"""

    def __init__(self, command: str, seed: Optional[int] = None):
        """
        Initialize the orchestrator

        Args:
            command: gen, train, analyze or bench
            seed: Global seed override (DISCO_SEED)
        """
        self.command = command
        self.seed = seed
        self.started = datetime.now()

    def _banner(self, title: str) -> None:
        print(f"\n{'=' * 60}")
        print(f"DISCO TOOLKIT - {title}")
        print(f"{'=' * 60}")
        if self.seed is not None:
            print(f"Seed override: {self.seed}")
        print(f"Log file: {LOG_FILE}")
        print(f"{'=' * 60}\n")

    def _done(self) -> None:
        seconds = (datetime.now() - self.started).total_seconds()
        print(f"\n{'=' * 60}")
        print(f"{self.command.upper()} COMPLETE in {seconds:.1f}s")
        print(f"{'=' * 60}\n")

    # ===== Seed override =====

    def apply_seed(self, config):
        """Copy of a command config with every seed replaced by the override"""
        if self.seed is None:
            return config
        if isinstance(config, GenConfig):
            # each split gets its own stream so train and test never coincide
            splits = [
                split.model_copy(update={"dataset": split.dataset.model_copy(
                    update={"seed": derived_seeds(self.seed, split.name, 1)[0]}
                )})
                for split in config.splits
            ]
            return config.model_copy(update={"splits": splits})
        if isinstance(config, TrainRunConfig):
            return config.model_copy(update={"train": config.train.model_copy(update={"seed": self.seed})})
        return config.model_copy(update={"seed": self.seed})

    # ===== Commands =====

    def cmd_gen(self, config: GenConfig) -> List[Dict[str, Any]]:
        self._banner("DATASET GENERATION")
        config = self.apply_seed(config)
        module_b = ModuleB(
            output_dir=Path(config.output_dir) if config.output_dir else DATASETS_DIR,
            preview=config.preview
        )
        results = module_b.run(config)
        module_b.print_summary(results)
        self._done()
        return results

    def cmd_train(self, config: TrainRunConfig) -> Dict[str, Any]:
        self._banner("PENALIZED TRAINING")
        config = self.apply_seed(config)
        module_c = ModuleC(output_dir=Path(config.output_dir) if config.output_dir else RUNS_DIR)
        results = module_c.run(config)
        module_c.print_summary(results)
        self._done()
        return results

    def cmd_analyze(self, config: AnalyzeConfig, checkpoint: Optional[Path] = None) -> Dict[str, Any]:
        self._banner("PATHWAY ANALYSIS")
        config = self.apply_seed(config)
        module_d = ModuleD(output_dir=REPORTS_DIR)
        results = module_d.run(config, checkpoint=checkpoint)
        module_d.print_summary(results)
        self._done()
        return results

    def cmd_bench(self, config: BenchConfig) -> Dict[str, Any]:
        self._banner("SCALING BENCHMARK")
        config = self.apply_seed(config)
        module_e = ModuleE(output_dir=REPORTS_DIR)
        results = module_e.run(config)
        module_e.print_summary(results)
        self._done()
        return results


def _sizes(text: str) -> List[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"sizes must be comma-separated integers, got '{text}'") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="disco",
        description="Conditional distance correlation toolkit: generate, train, analyze, bench"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="Generate datasets from SCM families")
    gen.add_argument("--config", required=True, type=Path, help="GenConfig JSON")

    train = sub.add_parser("train", help="Train predictors over the lambda x bandwidth grid")
    train.add_argument("--config", required=True, type=Path, help="TrainRunConfig JSON")

    analyze = sub.add_parser("analyze", help="Counterfactual sensitivity and pathway reports")
    analyze.add_argument("--config", required=True, type=Path, help="AnalyzeConfig JSON")
    analyze.add_argument("--checkpoint", type=Path, default=None, help="Extra model checkpoint (.dprd)")

    bench = sub.add_parser("bench", help="Naive vs sDISCO scaling benchmark")
    bench.add_argument("--config", type=Path, default=None, help="BenchConfig JSON")
    bench.add_argument("--sizes", type=_sizes, default=None, help="Comma-separated n values, e.g. 128,512,2048")
    bench.add_argument("--reps", type=int, default=None, help="Timed repetitions per estimator")
    bench.add_argument("--out", type=str, default=None, help="Output CSV path")
    return parser


def _bench_config(args: argparse.Namespace) -> BenchConfig:
    data: Dict[str, Any] = {}
    if args.config is not None:
        data = load_config(args.config, BenchConfig).model_dump()
    overrides = {"sizes": args.sizes, "reps": args.reps, "out": args.out}
    data.update({k: v for k, v in overrides.items() if v is not None})
    return BenchConfig.model_validate(data)


def run(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run the command and map failures to exit codes

    Returns:
        0 on success; 2 schema/config, 3 I/O, 4 capacity, 5 numeric domain,
        6 capability, 1 anything else
    """
    args = build_parser().parse_args(argv)
    try:
        validate_config()
        orchestrator = DiscoOrchestrator(args.command, seed=seed_override())
        if args.command == "gen":
            orchestrator.cmd_gen(load_config(args.config, GenConfig))
        elif args.command == "train":
            orchestrator.cmd_train(load_config(args.config, TrainRunConfig))
        elif args.command == "analyze":
            orchestrator.cmd_analyze(load_config(args.config, AnalyzeConfig), checkpoint=args.checkpoint)
        else:
            orchestrator.cmd_bench(_bench_config(args))
        return EXIT_CODES["success"]
    except ValidationError as e:
        print(f"\n[ERROR] Invalid config:\n{e}")
        return EXIT_CODES["schema"]
    except DiscoError as e:
        print(f"\n[ERROR] {type(e).__name__}: {e}")
        logger.debug(traceback.format_exc())
        return e.exit_code
    except OSError as e:
        print(f"\n[ERROR] I/O failure: {e}")
        return EXIT_CODES["io"]
    except ValueError as e:
        # environment validation
        print(f"\n[ERROR] {e}")
        print("\nPlease check your .env file against .env.example.")
        return EXIT_CODES["schema"]
    except KeyboardInterrupt:
        print("\n\n[INTERRUPTED] Stopped by user")
        return EXIT_CODES["error"]
    except Exception as e:
        print(f"\n[FATAL ERROR] {e}")
        traceback.print_exc()
        return EXIT_CODES["error"]


if __name__ == "__main__":
    sys.exit(run())
