"""
Random SAM instances for theorem sweeps

Graph: Z -> Y -> W, with X reading (Y, W, Z) or Y alone.
"""
import logging
from typing import Dict, Optional

import numpy as np

from src.exceptions import ConfigurationError
from src.utils.rng import stream
from .pathway_config import SAM_EXOGENOUS_P_RANGE, SAM_EXTRA_EXOGENOUS_STATES, SAM_MAX_REDRAWS, X_PARENT_MODES
from .scm import DiscreteSCM, enumerate_joint, marginal

logger = logging.getLogger(__name__)


def _parents(x_parents: str) -> Dict[str, list]:
    return {
        "Z": [],
        "Y": ["Z"],
        "W": ["Y"],
        "X": ["Y", "W", "Z"] if x_parents == "all" else ["Y"]
    }


def _surjective_rows(rng: np.random.Generator, rows: int, cardinality: int, states: int) -> np.ndarray:
    """Per parent row, a shuffled map over exogenous states that hits every value"""
    out = np.empty((rows, states), dtype=np.int64)
    for r in range(rows):
        row = np.concatenate([np.arange(cardinality), rng.integers(0, cardinality, size=states - cardinality)])
        out[r] = rng.permutation(row)
    return out


def _draw(rng: np.random.Generator, parents: Dict[str, list], cardinality: int) -> DiscreteSCM:
    low, high = SAM_EXOGENOUS_P_RANGE
    exogenous, mechanisms = {}, {}
    for v, pa in parents.items():
        parent_shape = (cardinality,) * len(pa)
        if cardinality == 2:
            p = rng.uniform(low, high)
            exogenous[v] = np.array([1.0 - p, p])
            mechanisms[v] = rng.integers(0, cardinality, size=parent_shape + (2,))
        else:
            # every parent row reaches every value, so all cells stay positive
            states = cardinality + SAM_EXTRA_EXOGENOUS_STATES
            weights = rng.uniform(low, high, size=states)
            exogenous[v] = weights / weights.sum()
            rows = int(np.prod(parent_shape, dtype=np.int64))
            mechanisms[v] = _surjective_rows(rng, rows, cardinality, states).reshape(parent_shape + (states,))
    return DiscreteSCM(
        variables=list(parents),
        cardinality={v: cardinality for v in parents},
        parents=parents,
        exogenous=exogenous,
        mechanisms=mechanisms,
        target="Y",
        mediators=["W"],
        backdoor=["Z"],
        inputs=["X"]
    )


def is_positive(scm: DiscreteSCM) -> bool:
    """Every (Y, W, Z) cell has positive probability"""
    cells = marginal(enumerate_joint(scm), scm, [scm.target, *scm.bias])
    return bool(np.all(cells > 0))


def random_sam(seed: int, x_parents: str = "all", cardinality: int = 2,
               rng: Optional[np.random.Generator] = None) -> DiscreteSCM:
    """
    Draw a SAM instance with random mechanism tables

    Binary instances use binary exogenous variables with P(U = 1) ~ Unif(0.1, 0.9) and
    uniformly random tables, redrawn until every (Y, W, Z) cell has positive probability.
    Larger value sets get one extra exogenous state and tables whose every parent row
    maps onto all values, which makes them positive on the first draw.

    Args:
        seed: Instance seed
        x_parents: "all" (X <- Y, W, Z) or "target_only" (X <- Y)
        cardinality: Values per endogenous variable
        rng: Generator to draw from instead of the seed's stream
    """
    if x_parents not in X_PARENT_MODES:
        raise ConfigurationError(f"x_parents must be one of {X_PARENT_MODES}")
    rng = rng if rng is not None else stream(seed, "random_sam", x_parents, cardinality)
    parents = _parents(x_parents)
    for attempt in range(SAM_MAX_REDRAWS):
        scm = _draw(rng, parents, cardinality)
        if is_positive(scm):
            if attempt:
                logger.debug(f"random_sam(seed={seed}) accepted after {attempt + 1} draws")
            return scm
    raise ConfigurationError(f"no positive SAM instance within {SAM_MAX_REDRAWS} draws")
