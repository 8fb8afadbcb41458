"""
Centralized configuration for the DISCO toolkit
"""
import os
import logging
from pathlib import Path
from typing import Optional
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Project root directory
ROOT_DIR = Path(__file__).parent.parent
DATA_DIR = Path(os.getenv("DISCO_DATA_DIR", str(ROOT_DIR / "data")))
DATASETS_DIR = DATA_DIR / "datasets"
RUNS_DIR = DATA_DIR / "runs"
REPORTS_DIR = DATA_DIR / "reports"
LOGS_DIR = ROOT_DIR / "logs"

# Create directories if they don't exist
DATASETS_DIR.mkdir(parents=True, exist_ok=True)
RUNS_DIR.mkdir(parents=True, exist_ok=True)
REPORTS_DIR.mkdir(parents=True, exist_ok=True)
LOGS_DIR.mkdir(parents=True, exist_ok=True)

# ===== Reproducibility =====
# DISCO_SEED overrides the seed of every command config when set
SEED_OVERRIDE = os.getenv("DISCO_SEED")

# Parallel worker slots for grid search (1 = sequential)
WORKERS = os.getenv("DISCO_WORKERS", "1")

# ===== Logging =====


LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LOG_FILE = LOGS_DIR / "disco.log"
METRICS_LOGGER = "disco.metrics"

logging.basicConfig(
    level=getattr(logging, LOG_LEVEL, logging.INFO),
    format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    handlers=[
        logging.FileHandler(LOG_FILE, encoding="utf-8"),
        logging.StreamHandler()
    ]
)
logger = logging.getLogger("disco")

# CLI exit codes (documented in README)
EXIT_CODES = {
    "success": 0,
    "error": 1,
    "schema": 2,
    "io": 3,
    "capacity": 4,
    "numeric_domain": 5,
    "capability": 6
}


def seed_override() -> Optional[int]:
    """Return the global seed override from the environment, if any"""
    if SEED_OVERRIDE is None or SEED_OVERRIDE.strip() == "":
        return None
    return int(SEED_OVERRIDE)


def worker_count() -> int:
    """Default number of parallel grid-search slots"""
    return int(WORKERS)


# Validate critical configuration
def validate_config():
    """Validate that environment-driven configuration values are usable"""
    errors = []
    warnings = []

    if SEED_OVERRIDE not in (None, ""):
        try:
            int(SEED_OVERRIDE)
        except ValueError:
            errors.append(f"DISCO_SEED must be an integer, got '{SEED_OVERRIDE}'")
        else:
            warnings.append(f"DISCO_SEED={SEED_OVERRIDE} overrides config seeds")

    try:
        if int(WORKERS) < 1:
            errors.append("DISCO_WORKERS must be >= 1")
    except ValueError:
        errors.append(f"DISCO_WORKERS must be an integer, got '{WORKERS}'")

    if LOG_LEVEL not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        warnings.append(f"Unknown LOG_LEVEL '{LOG_LEVEL}', using INFO")

    for warning in warnings:
        logger.warning(warning)

    if errors:
        raise ValueError(f"Configuration errors: {', '.join(errors)}")


if __name__ == "__main__":
    validate_config()
    print("✓ Configuration validated successfully")
