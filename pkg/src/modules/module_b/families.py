"""
Structural causal model families

Each family draws exogenous noise in bulk, evaluates its mechanisms one
unit at a time (the same code path serves generation and counterfactual
regeneration) and renders the observed feature vector.
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from src.exceptions import CapabilityError, InputError
from src.models import DatasetSpec
from src.utils.raster import ShapeRasterizer, gaussian_bump
from . import scm_config as cfg

logger = logging.getLogger(__name__)

Exogenous = Dict[str, float]
Endogenous = Dict[str, float]


@dataclass
class Unit:
    """One unit u: exogenous draw, realized variables and observation"""
    exogenous: Exogenous
    endogenous: Endogenous
    features: np.ndarray
    label: float
    mode: str = "biased"

    def same_as(self, other: "Unit") -> bool:
        """Bitwise equality of every field"""
        return (
            self.exogenous == other.exogenous
            and self.endogenous == other.endogenous
            and self.label == other.label
            and self.mode == other.mode
            and self.features.shape == other.features.shape
            and self.features.tobytes() == other.features.tobytes()
        )


@dataclass(frozen=True)
class Domain:
    """Range of values drawn for uniform interventions"""
    kind: str                                   # "uniform" or "choice"
    low: float = 0.0
    high: float = 1.0
    values: Tuple[float, ...] = field(default_factory=tuple)

    def draw(self, rng: np.random.Generator) -> float:
        if self.kind == "choice":
            return float(self.values[int(rng.integers(len(self.values)))])
        return float(rng.uniform(self.low, self.high))


def _pick(interventions: Mapping[str, float], name: str, value: float) -> float:
    if name in interventions:
        return float(interventions[name])
    return float(value)


class SCMFamily(ABC):
    """Base class of the synthetic SCM families"""

    name: str = ""
    target: str = ""
    bias: Tuple[str, ...] = ()
    variables: Tuple[str, ...] = ()
    head: str = "linear"
    n_classes: Optional[int] = None
    domains: Dict[str, Domain] = {}

    def __init__(self, spec: DatasetSpec):
        self.spec = spec

    @property
    def is_classification(self) -> bool:
        return self.head == "logits"

    @abstractmethod
    def draw_exogenous(self, rng: np.random.Generator, n: int) -> Dict[str, np.ndarray]:
        """Draw n exogenous realizations"""

    @abstractmethod
    def mechanisms(self, exo: Exogenous, mode: str, interventions: Mapping[str, float]) -> Endogenous:
        """Evaluate the structural equations in topological order"""

    @abstractmethod
    def render(self, endo: Endogenous, exo: Exogenous) -> np.ndarray:
        """Observation (flat float vector) of one unit"""

    def build_unit(self, exo: Exogenous, mode: str) -> Unit:
        endo = self.mechanisms(exo, mode, {})
        return Unit(
            exogenous=exo,
            endogenous=endo,
            features=self.render(endo, exo),
            label=endo[self.target],
            mode=mode
        )

    def counterfactual(self, unit: Unit, interventions: Mapping[str, float]) -> Unit:
        """
        Re-run the mechanisms of a unit with some variables clamped

        The unit's exogenous draw is reused as-is. A null intervention
        (empty, or every value equal to the factual one) returns the unit
        itself.
        """
        unknown = [k for k in interventions if k not in self.variables]
        if unknown:
            raise InputError(f"{self.name}: unknown variable(s) {unknown}, expected {list(self.variables)}")
        endo = self.mechanisms(unit.exogenous, unit.mode, interventions)
        if endo == unit.endogenous:
            return unit
        return Unit(
            exogenous=unit.exogenous,
            endogenous=endo,
            features=self.render(endo, unit.exogenous),
            label=endo[self.target],
            mode=unit.mode
        )

    def intervention_domain(self, variable: str) -> Domain:
        if variable not in self.variables:
            raise InputError(f"{self.name}: unknown variable '{variable}'")
        if variable not in self.domains:
            raise CapabilityError(f"{self.name}: variable '{variable}' is not intervenable")
        return self.domains[variable]

    def is_categorical(self, variable: str) -> bool:
        domain = self.domains.get(variable)
        return domain is not None and domain.kind == "choice"


# ===== Image families =====

class BlobFamily(SCMFamily):
    """Two Gaussian blobs; the second blob's intensity is a noisy copy of the first"""

    name = "blob"
    target = "CI"
    bias = ("BI",)
    variables = ("CI", "BI")
    head = "linear"
    domains = {
        "CI": Domain("uniform", 0.0, 1.0),
        "BI": Domain("uniform", 0.0, 1.0)
    }

    def __init__(self, spec: DatasetSpec):
        super().__init__(spec)
        self.resolution = spec.resolution or cfg.DEFAULT_RESOLUTION["blob"]
        scale = self.resolution / cfg.DEFAULT_RESOLUTION["blob"]
        sigma = cfg.BLOB_SIGMA_PX * scale
        self._causal_bump = gaussian_bump(
            self.resolution, tuple(c * scale for c in cfg.BLOB_CAUSAL_CENTRE), sigma
        )
        self._bias_bump = gaussian_bump(
            self.resolution, tuple(c * scale for c in cfg.BLOB_BIAS_CENTRE), sigma
        )

    def draw_exogenous(self, rng, n):
        return {
            "U_causal": rng.uniform(0.0, 1.0, n),
            "U_bias": rng.normal(0.0, cfg.BLOB_U_BIAS_STD, n),
            "eps_causal": rng.normal(0.0, cfg.BLOB_EPS_CAUSAL_STD, n),
            "U_alt": rng.uniform(0.0, 1.0, n)
        }

    def mechanisms(self, exo, mode, interventions):
        ci = _pick(interventions, "CI", exo["U_causal"])
        source = ci if mode == "biased" else exo["U_alt"]
        bi = _pick(interventions, "BI", source + exo["U_bias"])
        return {"CI": ci, "BI": bi}

    def render(self, endo, exo):
        img = (
            math.exp(endo["CI"] + exo["eps_causal"]) * self._causal_bump
            + math.exp(endo["BI"]) * self._bias_bump
        )
        return img.reshape(-1)


class DSpritesPositionFamily(SCMFamily):
    """Sprite whose y-position encodes the target; the x-position is a shortcut"""

    name = "dsprites"
    target = "y"
    bias = ("x_pos",)
    variables = ("x", "y", "x_pos", "y_pos")
    head = "linear"
    domains = {
        "x": Domain("uniform", 0.0, 1.0),
        "y": Domain("uniform", -0.3, 1.3),
        "x_pos": Domain("uniform", 0.0, 1.0),
        "y_pos": Domain("uniform", 0.5, 4.0)
    }

    def __init__(self, spec: DatasetSpec):
        super().__init__(spec)
        self.resolution = spec.resolution or cfg.DEFAULT_RESOLUTION["dsprites"]
        self.rasterizer = ShapeRasterizer(resolution=self.resolution)

    def draw_exogenous(self, rng, n):
        lo, hi = cfg.DSPRITES_U_X_RANGE
        return {
            "U_x": rng.uniform(lo, hi, n),
            "U_x_alt": rng.uniform(lo, hi, n),
            "U_y": rng.normal(0.0, cfg.DSPRITES_U_Y_STD, n),
            "scale": rng.uniform(*cfg.DSPRITES_SCALE_RANGE, n),
            "orientation": rng.uniform(0.0, 360.0, n),
            "shape": rng.integers(0, 3, n).astype(np.float64),
            "eps_x": rng.normal(0.0, cfg.DSPRITES_EPS_X_STD, n),
            "eps_y1": rng.normal(0.0, cfg.DSPRITES_EPS_Y1_STD, n),
            "eps_y2": rng.normal(0.0, cfg.DSPRITES_EPS_Y2_STD, n)
        }

    def mechanisms(self, exo, mode, interventions):
        x = _pick(interventions, "x", math.sin(exo["U_x"]))
        driver = x if mode == "biased" else math.sin(exo["U_x_alt"])
        y = _pick(interventions, "y", driver ** 2 + exo["U_y"])
        x_pos = _pick(interventions, "x_pos", x + exo["eps_x"])
        y_pos = _pick(interventions, "y_pos", math.exp(y + exo["eps_y1"]) + exo["eps_y2"])
        return {"x": x, "y": y, "x_pos": x_pos, "y_pos": y_pos}

    @staticmethod
    def _unit_interval(value: float, bounds: Tuple[float, float]) -> float:
        return (value - bounds[0]) / (bounds[1] - bounds[0])

    def render(self, endo, exo):
        img = self.rasterizer.render(
            shape=int(exo["shape"]),
            scale=exo["scale"],
            orientation_deg=exo["orientation"],
            x_pos=self._unit_interval(endo["x_pos"], cfg.DSPRITES_X_POS_RANGE),
            y_pos=self._unit_interval(endo["y_pos"], cfg.DSPRITES_Y_POS_RANGE)
        )
        return img.reshape(-1)


class DSpritesScaleFamily(DSpritesPositionFamily):
    """
    Binary scale class with x- and y-position as two confounded shortcuts

    A latent G drives both positions and (through a 10% flip) the scale
    class, so positions are siblings of the target rather than descendants.
    """

    target = "C"
    bias = ("x_pos", "y_pos")
    variables = ("C", "scale", "x_pos", "y_pos")
    head = "logits"
    n_classes = 2
    domains = {
        "C": Domain("choice", values=(0.0, 1.0)),
        "scale": Domain("uniform", cfg.SCALE_BASE, cfg.SCALE_BASE + 2 * cfg.SCALE_STEP),
        "x_pos": Domain("uniform", cfg.SCALE_POS_OFFSET, cfg.SCALE_POS_OFFSET + cfg.SCALE_POS_STEP + cfg.SCALE_POS_JITTER),
        "y_pos": Domain("uniform", cfg.SCALE_POS_OFFSET, cfg.SCALE_POS_OFFSET + cfg.SCALE_POS_STEP + cfg.SCALE_POS_JITTER)
    }

    def draw_exogenous(self, rng, n):
        return {
            "G": rng.integers(0, 2, n).astype(np.float64),
            "flip": (rng.random(n) < cfg.SCALE_FLIP_PROB).astype(np.float64),
            "G_x_alt": rng.integers(0, 2, n).astype(np.float64),
            "G_y_alt": rng.integers(0, 2, n).astype(np.float64),
            "U_sc": rng.uniform(0.0, cfg.SCALE_JITTER, n),
            "U_x": rng.uniform(*cfg.DSPRITES_U_X_RANGE, n),
            "U_yp": rng.uniform(0.0, 1.0, n),
            "orientation": rng.uniform(0.0, 360.0, n),
            "shape": rng.integers(0, 3, n).astype(np.float64)
        }

    def mechanisms(self, exo, mode, interventions):
        c = _pick(interventions, "C", int(exo["G"]) ^ int(exo["flip"]))
        scale = _pick(interventions, "scale", cfg.SCALE_BASE + cfg.SCALE_STEP * c + exo["U_sc"])
        g_x = exo["G"] if mode == "biased" else exo["G_x_alt"]
        g_y = exo["G"] if mode == "biased" else exo["G_y_alt"]
        x_pos = _pick(
            interventions, "x_pos",
            cfg.SCALE_POS_OFFSET + cfg.SCALE_POS_STEP * g_x + cfg.SCALE_POS_JITTER * math.sin(exo["U_x"])
        )
        y_pos = _pick(
            interventions, "y_pos",
            cfg.SCALE_POS_OFFSET + cfg.SCALE_POS_STEP * g_y + cfg.SCALE_POS_JITTER * exo["U_yp"]
        )
        return {"C": c, "scale": scale, "x_pos": x_pos, "y_pos": y_pos}

    def render(self, endo, exo):
        img = self.rasterizer.render(
            shape=int(exo["shape"]),
            scale=endo["scale"],
            orientation_deg=exo["orientation"],
            x_pos=endo["x_pos"],
            y_pos=endo["y_pos"]
        )
        return img.reshape(-1)


# ===== Tabular families =====

class _EmbeddingFamily(SCMFamily):
    """Noisy low-dimensional embedding of the target and bias variables"""

    def __init__(self, spec: DatasetSpec):
        super().__init__(spec)
        self.bias_noise = spec.feature_noise
        self.target_noise = spec.feature_noise * cfg.TARGET_NOISE_FACTOR


class YaleBLikeFamily(_EmbeddingFamily):
    """Head pose (3 classes) with lighting direction as bias"""

    name = "yaleb_like"
    target = "pose"
    bias = ("azimuth", "elevation")
    variables = ("pose", "azimuth", "elevation")
    head = "logits"
    n_classes = cfg.YALEB_POSES
    domains = {
        "pose": Domain("choice", values=tuple(float(k) for k in range(cfg.YALEB_POSES))),
        "azimuth": Domain("uniform", *cfg.YALEB_AZIMUTH_RANGE),
        "elevation": Domain("uniform", *cfg.YALEB_ELEVATION_RANGE)
    }

    def draw_exogenous(self, rng, n):
        exo = {
            "U_pose": rng.integers(0, cfg.YALEB_POSES, n).astype(np.float64),
            "U_azimuth": rng.uniform(*cfg.YALEB_AZIMUTH_RANGE, n),
            "U_elevation": rng.uniform(*cfg.YALEB_ELEVATION_RANGE, n)
        }
        for k in range(cfg.YALEB_POSES):
            exo[f"n_pose{k}"] = rng.normal(0.0, 1.0, n)
        exo["n_azimuth"] = rng.normal(0.0, 1.0, n)
        exo["n_elevation"] = rng.normal(0.0, 1.0, n)
        return exo

    def mechanisms(self, exo, mode, interventions):
        return {
            "pose": _pick(interventions, "pose", exo["U_pose"]),
            "azimuth": _pick(interventions, "azimuth", exo["U_azimuth"]),
            "elevation": _pick(interventions, "elevation", exo["U_elevation"])
        }

    def render(self, endo, exo):
        az_lo, az_hi = cfg.YALEB_AZIMUTH_RANGE
        el_lo, el_hi = cfg.YALEB_ELEVATION_RANGE
        feats = [
            float(int(endo["pose"]) == k) + self.target_noise * exo[f"n_pose{k}"]
            for k in range(cfg.YALEB_POSES)
        ]
        feats.append(2.0 * (endo["azimuth"] - az_lo) / (az_hi - az_lo) - 1.0 + self.bias_noise * exo["n_azimuth"])
        feats.append(2.0 * (endo["elevation"] - el_lo) / (el_hi - el_lo) - 1.0 + self.bias_noise * exo["n_elevation"])
        return np.asarray(feats, dtype=np.float64)


class _BinaryPairFamily(_EmbeddingFamily):
    """Binary target and binary bias embedded as two noisy channels"""

    head = "logits"
    n_classes = 2

    def render(self, endo, exo):
        return np.asarray([
            endo[self.target] + self.target_noise * exo["n_target"],
            endo[self.bias[0]] + self.bias_noise * exo["n_bias"]
        ], dtype=np.float64)


class FairFaceLikeFamily(_BinaryPairFamily):
    """Independent binary target and attribute; dependence only through selection"""

    name = "fairface_like"
    target = "Y"
    bias = ("B",)
    variables = ("Y", "B")
    domains = {
        "Y": Domain("choice", values=(0.0, 1.0)),
        "B": Domain("choice", values=(0.0, 1.0))
    }

    def draw_exogenous(self, rng, n):
        return {
            "U_Y": rng.integers(0, 2, n).astype(np.float64),
            "U_B": rng.integers(0, 2, n).astype(np.float64),
            "n_target": rng.normal(0.0, 1.0, n),
            "n_bias": rng.normal(0.0, 1.0, n)
        }

    def mechanisms(self, exo, mode, interventions):
        return {
            "Y": _pick(interventions, "Y", exo["U_Y"]),
            "B": _pick(interventions, "B", exo["U_B"])
        }


class WaterbirdsFamily(_BinaryPairFamily):
    """Bird type drives the background with 90% agreement"""

    name = "waterbirds_discrete"
    target = "bird"
    bias = ("background",)
    variables = ("bird", "background")
    domains = {
        "bird": Domain("choice", values=(0.0, 1.0)),
        "background": Domain("choice", values=(0.0, 1.0))
    }

    def draw_exogenous(self, rng, n):
        return {
            "U_bird": (rng.random(n) < cfg.WATERBIRDS_P_BIRD).astype(np.float64),
            "U_background": rng.random(n),
            "n_target": rng.normal(0.0, 1.0, n),
            "n_bias": rng.normal(0.0, 1.0, n)
        }

    def mechanisms(self, exo, mode, interventions):
        bird = _pick(interventions, "bird", exo["U_bird"])
        if mode == "biased":
            p_water = cfg.WATERBIRDS_P_MATCH if bird == 1.0 else 1.0 - cfg.WATERBIRDS_P_MATCH
        else:
            p_water = 0.5
        background = _pick(interventions, "background", float(exo["U_background"] < p_water))
        return {"bird": bird, "background": background}


def get_family(spec: DatasetSpec) -> SCMFamily:
    """Instantiate the SCM family named by a dataset spec"""
    if spec.family == "blob":
        return BlobFamily(spec)
    if spec.family == "dsprites":
        if (spec.task or "position") == "scale":
            return DSpritesScaleFamily(spec)
        return DSpritesPositionFamily(spec)
    if spec.family == "yaleb_like":
        return YaleBLikeFamily(spec)
    if spec.family == "fairface_like":
        return FairFaceLikeFamily(spec)
    if spec.family == "waterbirds_discrete":
        return WaterbirdsFamily(spec)
    raise InputError(f"Unknown family '{spec.family}'")
