"""
Finite-support structural causal models with exact exogenous enumeration

Every endogenous variable V takes values 0 .. card(V)-1 and owns one
exogenous variable U_V with a finite distribution. A mechanism is a total
integer table indexed [parent values..., u] -> value. A unit is one joint
exogenous state; evaluation is vectorized over all units at once.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from src.exceptions import CapacityError, ConfigurationError, DimensionError
from src.models import PredictorDoc, RolesDoc, SCMDocument, VariableDoc
from src.utils.rng import stream
from .pathway_config import MAX_ENUMERATED_STATES, PROBABILITY_TOL, SCM_DOCUMENT_VERSION

logger = logging.getLogger(__name__)

Values = Dict[str, np.ndarray]
Intervention = Union[int, np.ndarray]


@dataclass
class PredictorTable:
    """
    Conditional table P(yhat | inputs)

    Attributes:
        inputs: Variables the predictor reads
        table: Array of shape (*card(inputs), classes); each row sums to 1
    """
    inputs: List[str]
    table: np.ndarray

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=np.float64)
        if self.table.ndim != len(self.inputs) + 1:
            raise DimensionError(
                f"predictor table has {self.table.ndim} axes, expected {len(self.inputs) + 1}"
            )
        if np.any(self.table < 0) or np.any(np.abs(self.table.sum(axis=-1) - 1.0) > PROBABILITY_TOL):
            raise ConfigurationError("predictor table rows must be distributions")

    @property
    def classes(self) -> int:
        return self.table.shape[-1]

    @classmethod
    def deterministic(cls, inputs: Sequence[str], labels: np.ndarray, classes: int) -> "PredictorTable":
        """One-hot table from an integer array of predicted labels indexed by input values"""
        labels = np.asarray(labels, dtype=np.int64)
        return cls(list(inputs), np.eye(classes)[labels])

    @classmethod
    def constant(cls, scm: "DiscreteSCM", label: int = 0, classes: Optional[int] = None) -> "PredictorTable":
        classes = classes or scm.cardinality[scm.target]
        shape = tuple(scm.cardinality[v] for v in scm.inputs)
        return cls.deterministic(scm.inputs, np.full(shape, label), classes)

    def probabilities(self, values: Values) -> np.ndarray:
        """(S, classes) prediction probabilities of every unit"""
        return self.table[tuple(values[v] for v in self.inputs)]

    def to_doc(self) -> PredictorDoc:
        return PredictorDoc(table=self.table.tolist(), classes=self.classes)


@dataclass
class DiscreteSCM:
    """
    Finite SCM with SAM roles

    Attributes:
        variables: Declared variable order
        cardinality: Number of values per variable
        parents: Endogenous parents per variable
        exogenous: P(U_V) per variable
        mechanisms: Integer tables [parent values..., u] -> value
        target: Y
        mediators: W
        backdoor: Z
        inputs: Variables a predictor may read (X)
    """
    variables: List[str]
    cardinality: Dict[str, int]
    parents: Dict[str, List[str]]
    exogenous: Dict[str, np.ndarray]
    mechanisms: Dict[str, np.ndarray]
    target: str
    mediators: List[str] = field(default_factory=list)
    backdoor: List[str] = field(default_factory=list)
    inputs: List[str] = field(default_factory=list)
    predictor: Optional[PredictorTable] = None

    def __post_init__(self):
        self._validate_roles()
        self.order = self._topological_order()
        for v in self.variables:
            self._validate_exogenous(v)
            self._validate_mechanism(v)
        if self.predictor is not None and self.predictor.inputs != self.inputs:
            raise ConfigurationError(f"predictor reads {self.predictor.inputs}, roles declare {self.inputs}")
        self._states: Optional[Tuple[np.ndarray, np.ndarray]] = None

    # ----- validation -----

    def _validate_roles(self) -> None:
        known = set(self.variables)
        roles = [self.target, *self.mediators, *self.backdoor, *self.inputs]
        unknown = [r for r in roles if r not in known]
        if unknown:
            raise ConfigurationError(f"roles name unknown variable(s) {unknown}")
        if len(set(roles)) != len(roles):
            raise ConfigurationError("target, mediators, backdoor and inputs must be disjoint")
        for v in self.variables:
            missing = [p for p in self.parents.get(v, []) if p not in known]
            if missing:
                raise ConfigurationError(f"{v}: unknown parent(s) {missing}")

    def _topological_order(self) -> List[str]:
        graph = nx.DiGraph()
        graph.add_nodes_from(self.variables)
        for v in self.variables:
            graph.add_edges_from((p, v) for p in self.parents.get(v, []))
        if not nx.is_directed_acyclic_graph(graph):
            raise ConfigurationError(f"causal graph has a cycle: {nx.find_cycle(graph)}")
        self.graph = graph
        return list(nx.lexicographical_topological_sort(graph, key=self.variables.index))

    def _validate_exogenous(self, v: str) -> None:
        probs = np.asarray(self.exogenous[v], dtype=np.float64)
        if probs.ndim != 1 or np.any(probs < 0) or abs(probs.sum() - 1.0) > PROBABILITY_TOL:
            raise ConfigurationError(f"{v}: exogenous probabilities must be non-negative and sum to 1")
        self.exogenous[v] = probs

    def _validate_mechanism(self, v: str) -> None:
        try:
            table = np.asarray(self.mechanisms[v])
        except ValueError as e:
            raise ConfigurationError(f"{v}: mechanism table is not a full nested array") from e
        expected = tuple(self.cardinality[p] for p in self.parents.get(v, [])) + (len(self.exogenous[v]),)
        if table.shape != expected:
            raise ConfigurationError(f"{v}: mechanism table has shape {table.shape}, expected {expected}")
        if not np.issubdtype(table.dtype, np.integer):
            if not np.all(np.mod(table, 1) == 0):
                raise ConfigurationError(f"{v}: mechanism values must be integers")
            table = table.astype(np.int64)
        if np.any(table < 0) or np.any(table >= self.cardinality[v]):
            raise ConfigurationError(f"{v}: mechanism values must lie in [0, {self.cardinality[v]})")
        self.mechanisms[v] = table.astype(np.int64)

    # ----- structure -----

    @property
    def bias(self) -> List[str]:
        """W and Z together"""
        return [*self.mediators, *self.backdoor]

    def descendants(self, v: str) -> List[str]:
        return sorted(nx.descendants(self.graph, v), key=self.variables.index)

    def state_count(self) -> int:
        return math.prod(len(self.exogenous[v]) for v in self.variables)

    def joint_size(self) -> int:
        return math.prod(self.cardinality[v] for v in self.variables)

    # ----- evaluation -----

    def exogenous_states(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        All joint exogenous states

        Returns:
            (S, V) index matrix in `variables` column order, (S,) probabilities
        """
        if self._states is None:
            count = self.state_count()
            if count > MAX_ENUMERATED_STATES:
                raise CapacityError(f"{count} exogenous states exceed the limit of {MAX_ENUMERATED_STATES}")
            sizes = [len(self.exogenous[v]) for v in self.variables]
            states = np.indices(sizes).reshape(len(sizes), -1).T
            prob = np.ones(len(states))
            for j, v in enumerate(self.variables):
                prob = prob * self.exogenous[v][states[:, j]]
            self._states = (states, prob)
        return self._states

    def evaluate(self, states: np.ndarray, interventions: Optional[Mapping[str, Intervention]] = None) -> Values:
        """
        Realize every variable for a batch of exogenous states

        Args:
            states: (S, V) exogenous index matrix
            interventions: Clamped values, scalars or per-unit arrays

        Returns:
            Variable name -> (S,) integer values
        """
        interventions = interventions or {}
        n = len(states)
        values: Values = {}
        for v in self.order:
            if v in interventions:
                values[v] = np.broadcast_to(np.asarray(interventions[v], dtype=np.int64), (n,)).copy()
                continue
            index = tuple(values[p] for p in self.parents.get(v, []))
            values[v] = self.mechanisms[v][index + (states[:, self.variables.index(v)],)]
        return values

    # ----- documents -----

    @classmethod
    def from_doc(cls, doc: SCMDocument) -> "DiscreteSCM":
        variables = [var.name for var in doc.variables]
        scm = cls(
            variables=variables,
            cardinality={var.name: var.cardinality for var in doc.variables},
            parents={var.name: list(var.parents) for var in doc.variables},
            exogenous={var.name: np.asarray(var.exogenous, dtype=np.float64) for var in doc.variables},
            mechanisms={var.name: np.asarray(var.mechanism) for var in doc.variables},
            target=doc.roles.target,
            mediators=list(doc.roles.mediators),
            backdoor=list(doc.roles.backdoor),
            inputs=list(doc.roles.inputs)
        )
        if doc.predictor is not None:
            scm.predictor = PredictorTable(scm.inputs, np.asarray(doc.predictor.table, dtype=np.float64))
        return scm

    def to_doc(self) -> SCMDocument:
        return SCMDocument(
            version=SCM_DOCUMENT_VERSION,
            variables=[
                VariableDoc(
                    name=v,
                    cardinality=self.cardinality[v],
                    parents=self.parents.get(v, []),
                    exogenous=self.exogenous[v].tolist(),
                    mechanism=self.mechanisms[v].tolist()
                )
                for v in self.variables
            ],
            roles=RolesDoc(target=self.target, mediators=self.mediators,
                           backdoor=self.backdoor, inputs=self.inputs),
            predictor=self.predictor.to_doc() if self.predictor is not None else None
        )


def load_scm(path: Path) -> DiscreteSCM:
    """Read and validate a DiscreteSCM JSON document"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"SCM document not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path}: invalid JSON ({e})") from e
    return DiscreteSCM.from_doc(SCMDocument.model_validate(data))


def save_scm(scm: DiscreteSCM, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scm.to_doc().model_dump(), f, indent=2)
    return path


def enumerate_joint(scm: DiscreteSCM) -> np.ndarray:
    """
    Exact joint distribution of the endogenous variables

    Returns:
        Array of shape (*card(variables)) in declared order, summing to 1
    """
    if scm.joint_size() > MAX_ENUMERATED_STATES:
        raise CapacityError(f"{scm.joint_size()} joint cells exceed the limit of {MAX_ENUMERATED_STATES}")
    states, prob = scm.exogenous_states()
    values = scm.evaluate(states)
    joint = np.zeros(tuple(scm.cardinality[v] for v in scm.variables))
    np.add.at(joint, tuple(values[v] for v in scm.variables), prob)
    return joint


def sample_frequencies(scm: DiscreteSCM, n: int, seed: int = 0) -> np.ndarray:
    """Empirical joint frequencies of n forward samples (same layout as enumerate_joint)"""
    if n < 1:
        raise ConfigurationError("n must be positive")
    rng = stream(seed, "scm_sample")
    states = np.column_stack([
        rng.choice(len(scm.exogenous[v]), size=n, p=scm.exogenous[v]) for v in scm.variables
    ])
    values = scm.evaluate(states)
    shape = tuple(scm.cardinality[v] for v in scm.variables)
    flat = np.ravel_multi_index(tuple(values[v] for v in scm.variables), shape)
    return np.bincount(flat, minlength=math.prod(shape)).reshape(shape) / n


def marginal(joint: np.ndarray, scm: DiscreteSCM, keep: Sequence[str]) -> np.ndarray:
    """Sum a joint array down to the variables in `keep` (declared order)"""
    drop = tuple(i for i, v in enumerate(scm.variables) if v not in keep)
    return joint.sum(axis=drop)


def describe(scm: DiscreteSCM) -> Dict[str, Any]:
    return {
        "variables": scm.variables,
        "order": scm.order,
        "target": scm.target,
        "mediators": scm.mediators,
        "backdoor": scm.backdoor,
        "inputs": scm.inputs,
        "exogenous_states": scm.state_count()
    }
