"""
Dataset containers (.dscm) and CSV export
"""
import logging
from pathlib import Path

import numpy as np

from src.exceptions import InputError
from src.models import DatasetSpec
from src.utils.container import read_container, write_container
from .families import Unit, get_family
from .generators import Dataset

logger = logging.getLogger(__name__)

DATASET_MAGIC = b"DSCM"
DATASET_VERSION = 1


def save_dataset(dataset: Dataset, path: Path) -> Path:
    """Write a dataset container: features, labels, bias, exogenous and endogenous tables"""
    exo_names = list(dataset.units[0].exogenous.keys())
    endo_names = list(dataset.family.variables)
    header = {
        "family": dataset.spec.family,
        "spec": dataset.spec.model_dump(),
        "n": len(dataset),
        "dim": int(dataset.units[0].features.size),
        "seed": dataset.spec.seed,
        "label_noise": dataset.spec.label_noise,
        "bias_mode": dataset.spec.bias_mode,
        "target": dataset.family.target,
        "bias_names": dataset.bias_names,
        "exogenous_names": exo_names,
        "endogenous_names": endo_names,
        "retained_fraction": dataset.retained_fraction
    }
    blocks = [
        dataset.features(),
        dataset.labels(),
        dataset.bias(),
        np.asarray([[u.exogenous[k] for k in exo_names] for u in dataset.units]),
        np.asarray([[u.endogenous[k] for k in endo_names] for u in dataset.units])
    ]
    return write_container(path, DATASET_MAGIC, DATASET_VERSION, header, blocks)


def load_dataset(path: Path) -> Dataset:
    """Read a dataset container back into units"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Dataset not found: {path}")
    header, blocks = read_container(path, DATASET_MAGIC, DATASET_VERSION)
    if len(blocks) != 5:
        raise InputError(f"{path}: expected 5 blocks, found {len(blocks)}")
    features, labels, _bias, exo, endo = blocks

    spec = DatasetSpec.model_validate(header["spec"])
    family = get_family(spec)
    exo_names = header["exogenous_names"]
    endo_names = header["endogenous_names"]
    units = [
        Unit(
            exogenous={k: float(v) for k, v in zip(exo_names, exo[i])},
            endogenous={k: float(v) for k, v in zip(endo_names, endo[i])},
            features=np.array(features[i]),
            label=float(labels[i]),
            mode=spec.bias_mode
        )
        for i in range(int(header["n"]))
    ]
    logger.info(f"Loaded {len(units)} {spec.family} units from {path}")
    return Dataset(spec=spec, family=family, units=units, retained_fraction=float(header["retained_fraction"]))


def export_csv(dataset: Dataset, path: Path) -> Path:
    """One row per unit with label, endogenous and exogenous columns"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dataset.to_frame().to_csv(path, index=False, float_format="%.17g")
    return path
