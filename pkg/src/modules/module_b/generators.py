"""
Seeded dataset generation, selection, label noise and positivity checks
"""
import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.exceptions import ConfigurationError, ContractError, InputError
from src.models import DatasetSpec
from src.modules.module_a.distance import one_hot
from src.utils.rng import stream
from . import scm_config as cfg
from .families import SCMFamily, Unit, get_family

logger = logging.getLogger(__name__)

SELECTION_RULES = ("yaleb_like", "fairface_like")


@dataclass
class Dataset:
    """Units drawn from one family plus array views for training"""
    spec: DatasetSpec
    family: SCMFamily
    units: List[Unit]
    retained_fraction: float = 1.0

    def __len__(self) -> int:
        return len(self.units)

    @property
    def bias_names(self) -> List[str]:
        return list(self.family.bias)

    def features(self) -> np.ndarray:
        return np.stack([u.features for u in self.units]).astype(np.float64)

    def labels(self) -> np.ndarray:
        """Observed (possibly noisy) labels"""
        return np.asarray([u.label for u in self.units], dtype=np.float64)

    def targets(self) -> np.ndarray:
        """Noise-free target variable"""
        return np.asarray([u.endogenous[self.family.target] for u in self.units], dtype=np.float64)

    def bias(self, names: Optional[Sequence[str]] = None) -> np.ndarray:
        names = list(names) if names is not None else self.bias_names
        missing = [b for b in names if b not in self.family.variables]
        if missing:
            raise InputError(f"{self.family.name}: unknown bias column(s) {missing}")
        return np.asarray([[u.endogenous[b] for b in names] for u in self.units], dtype=np.float64)

    def condition(self) -> np.ndarray:
        """Conditioning variable of the penalty: one-hot labels or the label column"""
        if self.family.is_classification:
            return np.asarray(one_hot(self.labels(), self.family.n_classes))
        return self.labels().reshape(-1, 1)

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(features, labels, bias matrix, condition)"""
        return self.features(), self.labels(), self.bias(), self.condition()

    def to_frame(self) -> pd.DataFrame:
        """One row per unit: label, endogenous and exogenous columns"""
        rows = []
        for k, u in enumerate(self.units):
            row = {"unit": k, "label": u.label}
            row.update({f"endo.{key}": v for key, v in u.endogenous.items()})
            row.update({f"exo.{key}": v for key, v in u.exogenous.items()})
            rows.append(row)
        return pd.DataFrame(rows)


def _generate_units(family: SCMFamily, n: int, seed: int, mode: str, chunk: Optional[int] = None) -> List[Unit]:
    names = (family.name, "exogenous") if chunk is None else (family.name, "exogenous", chunk)
    exo = family.draw_exogenous(stream(seed, *names), n)
    keys = list(exo.keys())
    return [family.build_unit({k: float(exo[k][i]) for k in keys}, mode) for i in range(n)]


def sample_units(family: SCMFamily, n: int, seed: int, mode: Optional[str] = None) -> List[Unit]:
    """Fresh units of a family without selection or label noise"""
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    return _generate_units(family, n, seed, mode or family.spec.bias_mode)


def _require_family(spec: DatasetSpec, family: str) -> None:
    if spec.family != family:
        raise ContractError(f"expected a '{family}' spec, got '{spec.family}'")


def blob_sample(spec: DatasetSpec) -> List[Unit]:
    """Two-blob units: CI := U_causal, BI := CI + U_bias (biased mode)"""
    _require_family(spec, "blob")
    return _generate_units(get_family(spec), spec.n, spec.seed, spec.bias_mode)


def dsprites_sample(spec: DatasetSpec) -> List[Unit]:
    """Sprite units: x = sin(U_x), y = x^2 + U_y for the position task"""
    _require_family(spec, "dsprites")
    return _generate_units(get_family(spec), spec.n, spec.seed, spec.bias_mode)


def waterbirds_discrete(
    n: int,
    seed: int,
    feature_noise: float = cfg.DEFAULT_FEATURE_NOISE,
    bias_mode: str = "biased"
) -> List[Unit]:
    """Binary (bird, background) units"""
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    spec = DatasetSpec(
        family="waterbirds_discrete", n=n, seed=seed, feature_noise=feature_noise, bias_mode=bias_mode
    )
    return _generate_units(get_family(spec), n, seed, bias_mode)


def _require_attributes(units: Sequence[Unit], names: Sequence[str], rule: str) -> None:
    for u in units:
        missing = [name for name in names if name not in u.endogenous]
        if missing:
            raise InputError(f"{rule} selection needs attribute(s) {missing}")


def retention_probabilities(units: Sequence[Unit], rule: str) -> np.ndarray:
    """Per-unit keep probability of a selection rule"""
    if rule == "fairface_like":
        _require_attributes(units, ("Y", "B"), rule)
        aligned = np.asarray([u.endogenous["Y"] == u.endogenous["B"] for u in units])
        return np.where(aligned, cfg.FAIRFACE_KEEP_ALIGNED, cfg.FAIRFACE_KEEP_CONFLICT)
    if rule == "yaleb_like":
        _require_attributes(units, ("pose", "azimuth", "elevation"), rule)
        lighting = np.asarray([[u.endogenous["azimuth"], u.endogenous["elevation"]] for u in units])
        std = lighting.std(axis=0)
        std[std == 0] = 1.0
        score = ((lighting - lighting.mean(axis=0)) / std) @ np.asarray(cfg.YALEB_SCORE_DIRECTION)
        cuts = np.quantile(score, [1.0 / 3.0, 2.0 / 3.0])
        z = np.searchsorted(cuts, score, side="right")
        pose = np.asarray([int(u.endogenous["pose"]) for u in units])
        return np.where(pose == z, cfg.YALEB_KEEP_MATCH, cfg.YALEB_KEEP_OTHER)
    raise ConfigurationError(f"Unknown selection rule '{rule}', expected one of {SELECTION_RULES}")


def selection_bias_filter(units: Sequence[Unit], rule: str, seed: int, chunk: Optional[int] = None) -> List[Unit]:
    """
    Keep each unit independently with the rule's retention probability

    Args:
        units: Candidate units
        rule: "yaleb_like" (pose vs. lighting tertile) or "fairface_like" (target/attribute alignment)
        seed: Seed of the retention draws

    Returns:
        Retained units in their original order
    """
    if not units:
        return []
    keep_prob = retention_probabilities(units, rule)
    names = ("selection", rule) if chunk is None else ("selection", rule, chunk)
    draws = stream(seed, *names).random(len(units))
    return [u for u, keep in zip(units, draws < keep_prob) if keep]


def apply_label_noise(
    units: Sequence[Unit],
    rate: float,
    seed: int,
    n_classes: Optional[int] = None
) -> List[Unit]:
    """
    Corrupt observed labels

    Classification (n_classes given): flip to a uniformly drawn different
    class with probability `rate`. Regression: add N(0, (rate * std(labels))^2).
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigurationError(f"label noise rate must be in [0, 1), got {rate}")
    units = list(units)
    if rate == 0.0 or not units:
        return units
    rng = stream(seed, "label_noise")
    labels = np.asarray([u.label for u in units], dtype=np.float64)
    if n_classes is not None:
        flip = rng.random(len(units)) < rate
        shift = rng.integers(1, n_classes, len(units))
        noisy = np.where(flip, (labels.astype(np.int64) + shift) % n_classes, labels)
    else:
        noisy = labels + rng.normal(0.0, rate * float(labels.std()), len(units))
    return [replace(u, label=float(v)) for u, v in zip(units, noisy)]


def counterfactual(unit: Unit, interventions: Mapping[str, float], family: SCMFamily) -> Unit:
    """Unit-level counterfactual: same exogenous draw, intervened mechanisms"""
    return family.counterfactual(unit, interventions)


def generate_dataset(spec: DatasetSpec) -> Dataset:
    """
    Draw a complete dataset for a spec

    Selection families in biased mode draw candidates in chunks until
    spec.n units are retained; the retained fraction is recorded.
    """
    family = get_family(spec)
    logger.info(f"Generating {spec.family} ({spec.bias_mode}, n={spec.n}, seed={spec.seed})")

    retained_fraction = 1.0
    if spec.family in SELECTION_RULES and spec.bias_mode == "biased":
        kept: List[Unit] = []
        candidates = 0
        chunk = 0
        while len(kept) < spec.n:
            batch = _generate_units(family, cfg.SELECTION_CHUNK, spec.seed, spec.bias_mode, chunk=chunk)
            candidates += len(batch)
            kept.extend(selection_bias_filter(batch, spec.family, spec.seed, chunk=chunk))
            chunk += 1
        units = kept[:spec.n]
        retained_fraction = len(kept) / candidates
        logger.info(f"Selection kept {len(kept)}/{candidates} candidates ({retained_fraction:.3f})")
    else:
        units = _generate_units(family, spec.n, spec.seed, spec.bias_mode)

    units = apply_label_noise(units, spec.label_noise, spec.seed, family.n_classes)
    return Dataset(spec=spec, family=family, units=units, retained_fraction=retained_fraction)


def _bins(values: np.ndarray, categorical: bool) -> np.ndarray:
    if categorical:
        return values.astype(np.int64)
    return (values > np.median(values)).astype(np.int64)


def positivity_report(dataset: Dataset) -> Dict[str, object]:
    """
    Overlap diagnostic: min over (target-bin, bias-bin) cells of P(b | y)

    Categorical variables use their classes, continuous ones a median split.
    """
    family = dataset.family
    y_bins = _bins(dataset.targets(), family.is_classification)
    report: Dict[str, object] = {"per_bias": {}, "min_conditional": 1.0}
    for j, name in enumerate(family.bias):
        b_bins = _bins(dataset.bias([name])[:, 0], family.is_categorical(name))
        cells = []
        for y in np.unique(y_bins):
            in_y = y_bins == y
            for b in np.unique(b_bins):
                p = float(np.mean(b_bins[in_y] == b))
                cells.append({"y_bin": int(y), "b_bin": int(b), "p_b_given_y": p})
        worst = min(c["p_b_given_y"] for c in cells)
        report["per_bias"][name] = {"min_conditional": worst, "cells": cells}
        report["min_conditional"] = min(report["min_conditional"], worst)
    report["positive"] = report["min_conditional"] > 0.0
    if not report["positive"]:
        logger.warning(f"Positivity violated for {family.name}: some P(b | y) cell is empty")
    return report
