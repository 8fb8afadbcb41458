"""
Monte Carlo counterfactual sensitivity of trained predictors

Units are drawn from a family, a variable is intervened with values drawn
uniformly from its domain, and predictions on the factual and
counterfactual observations are compared. Intervention values come from a
per-unit stream so results do not depend on evaluation order.
"""
import logging
from typing import List, Optional, Tuple

import numpy as np

from src.exceptions import CapabilityError
from src.modules.module_b.families import SCMFamily, Unit
from src.modules.module_b.generators import sample_units
from src.modules.module_c.metrics import r2_score
from src.modules.module_c.predictor import Predictor
from src.utils.rng import stream
from .pathway_config import DEFAULT_INTERVENTIONS, DEFAULT_UNITS

logger = logging.getLogger(__name__)


def _counterfactual_pairs(
    family: SCMFamily,
    variable: str,
    n_units: int,
    n_interventions: int,
    seed: int,
    factual_only: bool = False
) -> Tuple[List[Unit], List[Unit]]:
    """(factual, counterfactual) unit lists, n_units * n_interventions pairs each"""
    domain = family.intervention_domain(variable)
    units = sample_units(family, n_units, seed)
    factual, counterfactual = [], []
    for i, unit in enumerate(units):
        rng = stream(seed, "interventions", variable, i)
        for _ in range(n_interventions):
            value = unit.endogenous[variable] if factual_only else domain.draw(rng)
            factual.append(unit)
            counterfactual.append(family.counterfactual(unit, {variable: value}))
    return factual, counterfactual


def _predict(model: Predictor, units: List[Unit]) -> np.ndarray:
    return model.predict(np.stack([u.features for u in units]).astype(np.float64))


def sensitivity(
    model: Predictor,
    family: SCMFamily,
    variable: str,
    n_units: int = DEFAULT_UNITS,
    n_interventions: int = DEFAULT_INTERVENTIONS,
    seed: int = 0,
    factual_only: bool = False
) -> float:
    """
    S_variable: mean prediction change under interventions on one variable

    Classification uses the class-probability gap (half L1 distance between
    the probability vectors), regression |yhat(u) - yhat_x(u)|.

    Args:
        model: Trained predictor
        family: SCM family the units come from
        variable: Intervened variable
        n_units: Units drawn
        n_interventions: Interventions per unit
        seed: Root seed
        factual_only: Intervene with each unit's own value (null intervention)

    Returns:
        Mean absolute change; exactly 0 for null interventions
    """
    factual, counterfactual = _counterfactual_pairs(family, variable, n_units, n_interventions, seed, factual_only)
    changed = np.array([not cf.same_as(f) for f, cf in zip(factual, counterfactual)])
    if not changed.any():
        return 0.0

    gaps = np.zeros(len(factual))
    idx = np.flatnonzero(changed)
    p_f = _predict(model, [factual[i] for i in idx])
    p_cf = _predict(model, [counterfactual[i] for i in idx])
    if p_f.ndim == 2:
        gaps[idx] = 0.5 * np.abs(p_f - p_cf).sum(axis=1)
    else:
        gaps[idx] = np.abs(p_f - p_cf)
    return float(gaps.mean())


def ctf_accuracy(
    model: Predictor,
    family: SCMFamily,
    n_units: int = DEFAULT_UNITS,
    n_interventions: int = DEFAULT_INTERVENTIONS,
    seed: int = 0
) -> float:
    """Share of counterfactuals on the target whose predicted label equals the intervened target"""
    if not family.is_classification:
        raise CapabilityError(f"{family.name}: counterfactual accuracy needs a classification family")
    _, counterfactual = _counterfactual_pairs(family, family.target, n_units, n_interventions, seed)
    predicted = np.argmax(_predict(model, counterfactual), axis=1)
    truth = np.asarray([cf.endogenous[family.target] for cf in counterfactual]).astype(np.int64)
    return float(np.mean(predicted == truth))


def ctf_r2(
    model: Predictor,
    family: SCMFamily,
    n_units: int = DEFAULT_UNITS,
    n_interventions: int = DEFAULT_INTERVENTIONS,
    seed: int = 0
) -> float:
    """1 - MSE / variance over counterfactuals on the target"""
    if family.is_classification:
        raise CapabilityError(f"{family.name}: counterfactual R2 needs a regression family")
    _, counterfactual = _counterfactual_pairs(family, family.target, n_units, n_interventions, seed)
    truth = np.asarray([cf.endogenous[family.target] for cf in counterfactual])
    return r2_score(truth, _predict(model, counterfactual))


def counterfactual_score(model: Predictor, family: SCMFamily, n_units: int, n_interventions: int,
                         seed: int) -> Tuple[str, Optional[float]]:
    """ctf accuracy for classification families, ctf R2 for regression ones"""
    if family.target not in family.domains:
        logger.warning(f"{family.name}: target '{family.target}' is not intervenable, skipping ctf score")
        return ("ctf_accuracy" if family.is_classification else "ctf_r2"), None
    if family.is_classification:
        return "ctf_accuracy", ctf_accuracy(model, family, n_units, n_interventions, seed)
    return "ctf_r2", ctf_r2(model, family, n_units, n_interventions, seed)
