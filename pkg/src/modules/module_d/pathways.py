"""
Pathway effects of the target on a predictor's output, by exact enumeration

Counterfactuals are twin-world evaluations over the enumerated exogenous
states: every unit keeps its exogenous draw while Y (and, for nested
counterfactuals, the mediators) are clamped.
"""
import itertools
import logging
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from src.exceptions import CapacityError, ConfigurationError, UndefinedConditionalError
from src.models import PathwayReport, StabilityCertificate
from .pathway_config import CI_TOL, MAX_TABLE_CARDINALITY, MAX_TABLE_VARIABLES, THEOREM_TOL
from .scm import DiscreteSCM, PredictorTable, enumerate_joint, marginal

logger = logging.getLogger(__name__)


class TwinWorlds:
    """
    Factual and intervened worlds of one (SCM, predictor) pair

    Prediction probabilities per world are cached by intervention key.
    """

    def __init__(self, scm: DiscreteSCM, predictor: PredictorTable):
        if predictor.inputs != scm.inputs:
            raise ConfigurationError(f"predictor reads {predictor.inputs}, SCM inputs are {scm.inputs}")
        self.scm = scm
        self.predictor = predictor
        self.states, self.prob = scm.exogenous_states()
        self.factual = scm.evaluate(self.states)
        self._cache: Dict[Tuple, np.ndarray] = {("factual",): predictor.probabilities(self.factual)}

    def _check_target(self, *ys: int) -> None:
        k = self.scm.cardinality[self.scm.target]
        for y in ys:
            if not 0 <= y < k:
                raise ConfigurationError(f"target value {y} outside [0, {k})")

    def predictions(self, key: Tuple) -> np.ndarray:
        """(S, classes) predictions in the world named by `key`"""
        if key not in self._cache:
            scm = self.scm
            if key[0] == "do_y":
                values = scm.evaluate(self.states, {scm.target: key[1]})
            elif key[0] == "do_y_w":
                # mediators take the values they would have under do(Y = y_w)
                _, y, y_w = key
                under_w = scm.evaluate(self.states, {scm.target: y_w})
                clamp = {scm.target: y, **{w: under_w[w] for w in scm.mediators}}
                values = scm.evaluate(self.states, clamp)
            else:
                raise ConfigurationError(f"unknown world {key}")
            self._cache[key] = self.predictor.probabilities(values)
        return self._cache[key]

    def mask(self, conditioning: Mapping[str, int]) -> np.ndarray:
        m = np.ones(len(self.prob), dtype=bool)
        for var, val in conditioning.items():
            if var not in self.factual:
                raise ConfigurationError(f"unknown conditioning variable '{var}'")
            m &= self.factual[var] == int(val)
        return m

    def conditional(self, key: Tuple, yhat: int, conditioning: Mapping[str, int]) -> float:
        """P(yhat in world `key` | factual conditioning event)"""
        m = self.mask(conditioning)
        denom = float(self.prob[m].sum())
        if denom <= 0.0:
            raise UndefinedConditionalError(f"conditioning event {dict(conditioning)} has probability 0")
        return float(np.dot(self.prob[m], self.predictions(key)[m, yhat]) / denom)

    def cells(self, y: int) -> List[Tuple[Dict[str, int], float]]:
        """Positive-probability (w, z) cells given Y = y with their weights P(w, z | y)"""
        scm = self.scm
        in_y = (self.factual[scm.target] == y) & (self.prob > 0)
        p_y = float(self.prob[in_y].sum())
        if p_y <= 0.0:
            raise UndefinedConditionalError(f"P({scm.target} = {y}) is 0")
        bias = scm.bias
        if not bias:
            return [({}, 1.0)]
        combos = np.unique(np.column_stack([self.factual[b][in_y] for b in bias]), axis=0)
        out = []
        for combo in combos:
            cell = {b: int(v) for b, v in zip(bias, combo)}
            weight = float(self.prob[self.mask({scm.target: y, **cell})].sum()) / p_y
            out.append((cell, weight))
        return out


def _worlds(scm: DiscreteSCM, predictor: Optional[PredictorTable]) -> TwinWorlds:
    predictor = predictor if predictor is not None else scm.predictor
    if predictor is None:
        raise ConfigurationError("no predictor table given and the SCM declares none")
    return TwinWorlds(scm, predictor)


def tv(scm: DiscreteSCM, predictor: Optional[PredictorTable], y0: int, y1: int, yhat: int,
       worlds: Optional[TwinWorlds] = None) -> float:
    """Total variation P(yhat | y1) - P(yhat | y0)"""
    worlds = worlds if worlds is not None else _worlds(scm, predictor)
    worlds._check_target(y0, y1)
    factual = ("factual",)
    return (worlds.conditional(factual, yhat, {scm.target: y1})
            - worlds.conditional(factual, yhat, {scm.target: y0}))


def ctf_effects(
    scm: DiscreteSCM,
    predictor: Optional[PredictorTable],
    y0: int,
    y1: int,
    yhat: int,
    conditioning: Mapping[str, int],
    worlds: Optional[TwinWorlds] = None
) -> Tuple[float, float, float]:
    """
    Counterfactual stable, indirect and spurious effects

    Args:
        scm: Discrete SCM
        predictor: Predictor table (the SCM's own when None)
        y0, y1: Baseline and alternative target values
        yhat: Predicted class whose probability is compared
        conditioning: Factual event C, e.g. {"Y": 0, "W": 1, "Z": 0}
        worlds: Precomputed twin worlds to reuse

    Returns:
        (ctf_stable, ctf_ie, ctf_se); ctf_se does not depend on C
    """
    worlds = worlds if worlds is not None else _worlds(scm, predictor)
    worlds._check_target(y0, y1)
    nested = worlds.conditional(("do_y_w", y1, y0), yhat, conditioning)
    stable = nested - worlds.conditional(("do_y", y0), yhat, conditioning)
    ie = nested - worlds.conditional(("do_y", y1), yhat, conditioning)
    se = (worlds.conditional(("do_y", y1), yhat, {scm.target: y0})
          - worlds.conditional(("do_y", y1), yhat, {scm.target: y1}))
    return stable, ie, se


def decomposition_residual(
    scm: DiscreteSCM,
    predictor: Optional[PredictorTable],
    y0: int,
    y1: int,
    yhat: int,
    reading: str = "y0",
    worlds: Optional[TwinWorlds] = None
) -> float:
    """
    |TV - (sum_wz P(w,z|y) [stable - ie] - se)| with C = {y, w, z}

    `reading` picks y = y0 (canonical) or y = y1 for the weights and C.
    """
    if reading not in ("y0", "y1"):
        raise ConfigurationError(f"unknown reading '{reading}'")
    worlds = worlds if worlds is not None else _worlds(scm, predictor)
    y = y0 if reading == "y0" else y1
    total = 0.0
    se = 0.0
    for cell, weight in worlds.cells(y):
        stable, ie, se = ctf_effects(scm, None, y0, y1, yhat, {scm.target: y, **cell}, worlds=worlds)
        total += weight * (stable - ie)
    total -= se
    return abs(tv(scm, None, y0, y1, yhat, worlds=worlds) - total)


def verify_decomposition(scm: DiscreteSCM, predictor: Optional[PredictorTable], y0: int, y1: int, yhat: int) -> float:
    """Decomposition residual under the canonical P(w,z | y0) reading"""
    return decomposition_residual(scm, predictor, y0, y1, yhat, reading="y0")


def pathway_report(scm: DiscreteSCM, predictor: Optional[PredictorTable], y0: int, y1: int, yhat: int) -> PathwayReport:
    """TV, effects aggregated over C = {y0} and both decomposition residuals"""
    worlds = _worlds(scm, predictor)
    stable, ie, se = ctf_effects(scm, None, y0, y1, yhat, {scm.target: y0}, worlds=worlds)
    return PathwayReport(
        y0=y0,
        y1=y1,
        yhat=yhat,
        tv=tv(scm, None, y0, y1, yhat, worlds=worlds),
        ctf_stable=stable,
        ctf_ie=ie,
        ctf_se=se,
        decomposition_residual=decomposition_residual(scm, None, y0, y1, yhat, "y0", worlds),
        decomposition_residual_y1=decomposition_residual(scm, None, y0, y1, yhat, "y1", worlds)
    )


def _target_values(worlds: TwinWorlds) -> List[int]:
    """Target values with positive probability"""
    scm = worlds.scm
    return [y for y in range(scm.cardinality[scm.target])
            if worlds.prob[worlds.factual[scm.target] == y].sum() > 0]


def ci_residual(worlds: TwinWorlds) -> float:
    """max |P(yhat, w, z | y) - P(yhat | y) P(w, z | y)| over all cells"""
    scm = worlds.scm
    phat = worlds.predictions(("factual",))
    worst = 0.0
    for y in _target_values(worlds):
        in_y = worlds.mask({scm.target: y})
        p_y = float(worlds.prob[in_y].sum())
        p_hat_y = worlds.prob[in_y] @ phat[in_y] / p_y
        for cell, weight in worlds.cells(y):
            m = worlds.mask({scm.target: y, **cell})
            joint = worlds.prob[m] @ phat[m] / p_y
            worst = max(worst, float(np.max(np.abs(joint - p_hat_y * weight))))
    return worst


def stability_certificate(scm: DiscreteSCM, predictor: Optional[PredictorTable] = None) -> StabilityCertificate:
    """
    Conditional independence and the effects it should switch off

    is_ci tests yhat _||_ (W, Z) | Y on the enumerated joint; max_ie and
    max_se are the largest absolute indirect/spurious effects over every
    realization; de_spread is the largest range of ctf-stable over (w, z)
    at fixed (y0, y1, yhat, y).
    """
    worlds = _worlds(scm, predictor)
    ys = _target_values(worlds)
    classes = worlds.predictor.classes
    max_ie = max_se = de_spread = 0.0
    for y0, y1, yhat in itertools.product(ys, ys, range(classes)):
        for y in ys:
            stables = []
            for cell, _ in worlds.cells(y):
                stable, ie, se = ctf_effects(scm, None, y0, y1, yhat, {scm.target: y, **cell}, worlds=worlds)
                stables.append(stable)
                max_ie = max(max_ie, abs(ie))
                max_se = max(max_se, abs(se))
            de_spread = max(de_spread, max(stables) - min(stables))
    residual = ci_residual(worlds)
    logger.debug(f"CI residual {residual:.3e}, max_ie {max_ie:.3e}, max_se {max_se:.3e}")
    return StabilityCertificate(is_ci=residual <= CI_TOL, max_ie=max_ie, max_se=max_se, de_spread=de_spread)


def balanced_likelihood(worlds: TwinWorlds) -> float:
    """Class-balanced hit rate sum_y P(yhat = y | Y = y)"""
    scm = worlds.scm
    return sum(worlds.conditional(("factual",), y, {scm.target: y})
               for y in _target_values(worlds) if y < worlds.predictor.classes)


def stable_score(worlds: TwinWorlds) -> float:
    """ctf-stable toward the alternative class, summed over all ordered pairs y0 != y1"""
    scm = worlds.scm
    ys = _target_values(worlds)
    score = 0.0
    for y0, y1 in itertools.permutations(ys, 2):
        if y1 < worlds.predictor.classes:
            score += ctf_effects(scm, None, y0, y1, y1, {scm.target: y0}, worlds=worlds)[0]
    return score


def mle_predictor(scm: DiscreteSCM) -> PredictorTable:
    """Deterministic table argmax_y P(x | y) (uniform prior); unseen inputs predict 0"""
    keep = [scm.target, *scm.inputs]
    sub = marginal(enumerate_joint(scm), scm, keep)
    # marginal keeps declared order; reorder to (target, *inputs)
    axes = [v for v in scm.variables if v in keep]
    sub = np.transpose(sub, [axes.index(v) for v in keep])
    p_y = sub.reshape(sub.shape[0], -1).sum(axis=1).reshape((-1,) + (1,) * len(scm.inputs))
    likelihood = np.divide(sub, p_y, out=np.zeros_like(sub), where=p_y > 0)
    labels = np.argmax(likelihood, axis=0)
    return PredictorTable.deterministic(scm.inputs, labels, scm.cardinality[scm.target])


def random_predictor(scm: DiscreteSCM, rng: np.random.Generator) -> PredictorTable:
    k = scm.cardinality[scm.target]
    shape = tuple(scm.cardinality[v] for v in scm.inputs)
    return PredictorTable.deterministic(scm.inputs, rng.integers(0, k, size=shape), k)


def ci_tables(scm: DiscreteSCM) -> List[Tuple[PredictorTable, float, float]]:
    """
    Deterministic tables over the inputs with yhat _||_ (W, Z) | Y

    Returns:
        (table, balanced likelihood, stable score) per CI table; the constant
        tables are always among them
    """
    if len(scm.variables) > MAX_TABLE_VARIABLES or max(scm.cardinality.values()) > MAX_TABLE_CARDINALITY:
        raise CapacityError(
            f"exhaustive table search supports at most {MAX_TABLE_VARIABLES} variables "
            f"with {MAX_TABLE_CARDINALITY} values each"
        )
    k = scm.cardinality[scm.target]
    shape = tuple(scm.cardinality[v] for v in scm.inputs)
    cells = int(np.prod(shape))

    found = []
    for labels in itertools.product(range(k), repeat=cells):
        table = PredictorTable.deterministic(scm.inputs, np.asarray(labels).reshape(shape), k)
        worlds = TwinWorlds(scm, table)
        if ci_residual(worlds) > CI_TOL:
            continue
        found.append((table, balanced_likelihood(worlds), stable_score(worlds)))
    return found


def mle_stable_maximizer_check(scm: DiscreteSCM) -> bool:
    """
    Whether every likelihood maximizer among CI tables also maximizes ctf-stable

    Ties are allowed.
    """
    candidates = [(lik, s) for _, lik, s in ci_tables(scm)]
    best_likelihood = max(c[0] for c in candidates)
    best_stable = max(c[1] for c in candidates)
    maximizers = [s for lik, s in candidates if lik >= best_likelihood - THEOREM_TOL]
    held = all(s >= best_stable - THEOREM_TOL for s in maximizers)
    logger.debug(f"{len(candidates)} CI tables, {len(maximizers)} likelihood maximizer(s), held={held}")
    return held
