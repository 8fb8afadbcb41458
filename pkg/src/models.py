"""
Pydantic models for config validation and report serialization
"""
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.exceptions import ConfigurationError

FamilyName = Literal["blob", "dsprites", "yaleb_like", "fairface_like", "waterbirds_discrete"]
EstimatorName = Literal["sdisco", "disco_m", "none"]

ConfigT = TypeVar("ConfigT", bound=BaseModel)


class StrictModel(BaseModel):
    """Base for versioned documents: unknown keys are rejected"""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


# ===== Data generation =====

class DatasetSpec(StrictModel):
    """Synthetic dataset drawn from one SCM family"""
    family: FamilyName = Field(description="SCM family tag")
    n: int = Field(ge=1, description="Number of units")
    seed: int = Field(default=0, description="Root seed of the dataset")
    label_noise: float = Field(default=0.1, ge=0.0, lt=1.0, description="Label noise rate")
    bias_mode: Literal["biased", "unbiased"] = Field(
        default="biased",
        description="'unbiased' severs the biasing edge (independent redraw)"
    )
    resolution: Optional[int] = Field(
        default=None,
        ge=8,
        le=256,
        description="Image side in pixels (image families only)"
    )
    task: Optional[Literal["position", "scale"]] = Field(
        default=None,
        description="dsprites task: 'position' (regression) or 'scale' (classification)"
    )
    feature_noise: float = Field(
        default=0.2,
        ge=0.0,
        description="Embedding noise of the tabular families"
    )

    @model_validator(mode="after")
    def check_family_options(self):
        """Reject options that do not apply to the family"""
        if self.task is not None and self.family != "dsprites":
            raise ValueError(f"'task' only applies to dsprites, not {self.family}")
        if self.resolution is not None and self.family not in ("blob", "dsprites"):
            raise ValueError(f"'resolution' only applies to image families, not {self.family}")
        return self


class SplitSpec(StrictModel):
    name: str = Field(min_length=1, description="Split name, used as file stem")
    dataset: DatasetSpec


class GenConfig(StrictModel):
    """Config of the `gen` command"""
    version: Literal[1] = 1
    output_dir: Optional[str] = Field(default=None, description="Defaults to DATA_DIR/datasets")
    splits: List[SplitSpec] = Field(min_length=1)
    preview: int = Field(default=16, ge=0, description="Sample images in the PNG preview")

    @field_validator("splits")
    @classmethod
    def unique_names(cls, v):
        names = [s.name for s in v]
        if len(set(names)) != len(names):
            raise ValueError(f"split names must be unique, got {names}")
        return v


# ===== Training =====

class TrainConfig(StrictModel):
    """Predictor architecture, optimizer and penalty settings"""
    penalty_weight: float = Field(default=0.0, ge=0.0, alias="lambda", description="Penalty weight")
    bandwidth: Optional[float] = Field(
        default=None,
        gt=0.0,
        description="RBF bandwidth over targets; median heuristic when omitted"
    )
    estimator: EstimatorName = "sdisco"
    m_fraction: float = Field(default=0.2, gt=0.0, le=1.0)
    batch_size: int = Field(default=128, ge=1)
    epochs: int = Field(default=20, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0.0)
    optimizer: Literal["adam", "sgd"] = "adam"
    hidden: List[int] = Field(default_factory=lambda: [64, 64])
    activation: Literal["relu", "tanh"] = "relu"
    bias_columns: Optional[List[str]] = Field(
        default=None,
        description="Bias attributes seen by the penalty (all by default)"
    )
    seed: int = 0

    @field_validator("hidden")
    @classmethod
    def positive_widths(cls, v):
        if any(h < 1 for h in v):
            raise ValueError("hidden layer widths must be >= 1")
        return v


class TrainRunConfig(StrictModel):
    """Config of the `train` command"""
    version: Literal[1] = 1
    train_path: str
    val_path: str
    test_path: Optional[str] = None
    output_dir: Optional[str] = Field(default=None, description="Defaults to DATA_DIR/runs")
    train: TrainConfig = Field(default_factory=TrainConfig)
    lambda_grid: Optional[List[float]] = None
    bandwidth_grid: Optional[List[float]] = None
    workers: Optional[int] = Field(default=None, ge=1)
    full_grid: bool = Field(
        default=False,
        description="Search the standard lambda and bandwidth grids where no list is given"
    )

    @field_validator("lambda_grid")
    @classmethod
    def nonnegative_lambdas(cls, v):
        if v is not None and (not v or any(x < 0 for x in v)):
            raise ValueError("lambda_grid must be a non-empty list of values >= 0")
        return v

    @field_validator("bandwidth_grid")
    @classmethod
    def positive_bandwidths(cls, v):
        if v is not None and (not v or any(x <= 0 for x in v)):
            raise ValueError("bandwidth_grid must be a non-empty list of values > 0")
        return v


# ===== Analysis =====

class ModelEntry(StrictModel):
    name: str
    checkpoint: str


class SCMSection(StrictModel):
    """Discrete SAM instance analysed by exact enumeration"""
    document: Optional[str] = Field(default=None, description="Path to a DiscreteSCM JSON document")
    random_seed: Optional[int] = Field(default=None, description="Draw a random binary SAM instead")
    predictor: Literal["document", "mle", "constant", "random"] = "mle"
    predictor_seed: int = 0
    theorem_instances: int = Field(default=0, ge=0, description="Random instances for theorem sweeps")

    @model_validator(mode="after")
    def one_source(self):
        if (self.document is None) == (self.random_seed is None):
            raise ValueError("give exactly one of 'document' or 'random_seed'")
        if self.predictor == "document" and self.document is None:
            raise ValueError("predictor 'document' needs an SCM document")
        return self


class AnalyzeConfig(StrictModel):
    """Config of the `analyze` command"""
    version: Literal[1] = 1
    dataset: Optional[DatasetSpec] = Field(default=None, description="Family used for counterfactuals")
    models: List[ModelEntry] = Field(default_factory=list)
    variables: List[str] = Field(default_factory=list, description="Variables for S_X")
    heldout_path: Optional[str] = Field(default=None, description="Dataset for held-out dependence")
    n_units: int = Field(default=500, ge=1)
    n_interventions: int = Field(default=5, ge=1)
    seed: int = 0
    scm: Optional[SCMSection] = None
    output_path: Optional[str] = None


class BenchConfig(StrictModel):
    """Config of the `bench` command"""
    version: Literal[1] = 1
    sizes: List[int] = Field(default_factory=lambda: [128, 512, 2048])
    reps: int = Field(default=5, ge=1)
    seed: int = 0
    out: Optional[str] = None
    naive_max_n: int = Field(default=2048, ge=4, description="Skip the naive loop above this n")

    @field_validator("sizes")
    @classmethod
    def valid_sizes(cls, v):
        if not v or any(n < 4 for n in v):
            raise ValueError("sizes must be a non-empty list of integers >= 4")
        return sorted(set(v))


# ===== Discrete SCM documents =====

class VariableDoc(StrictModel):
    """One endogenous variable with its own exogenous parent U_V"""
    name: str = Field(min_length=1)
    cardinality: int = Field(ge=1, description="Values are 0 .. cardinality-1")
    parents: List[str] = Field(default_factory=list)
    exogenous: List[float] = Field(default_factory=lambda: [1.0], min_length=1,
                                   description="P(U_V = j) for every exogenous value j")
    mechanism: Any = Field(description="Nested array indexed [parent values..., u] -> value")


class RolesDoc(StrictModel):
    target: str
    mediators: List[str] = Field(default_factory=list)
    backdoor: List[str] = Field(default_factory=list)
    inputs: List[str] = Field(min_length=1)


class PredictorDoc(StrictModel):
    """P(yhat | inputs) as a nested array indexed [input values..., yhat]"""
    table: Any
    classes: Optional[int] = Field(default=None, ge=1)


class SCMDocument(StrictModel):
    version: Literal[1] = 1
    variables: List[VariableDoc] = Field(min_length=1)
    roles: RolesDoc
    predictor: Optional[PredictorDoc] = None

    @field_validator("variables")
    @classmethod
    def unique_variables(cls, v):
        names = [var.name for var in v]
        if len(set(names)) != len(names):
            raise ValueError("variable names must be unique")
        return v


# ===== Reports =====

class EpochRecord(BaseModel):
    """Metrics of one training epoch"""
    run: str
    epoch: int
    task_loss: float
    penalty: float
    val_metric: float
    val_metric_name: str
    seconds: float


class TrainSummary(BaseModel):
    run: str
    penalty_weight: float
    bandwidth: float
    best_epoch: int
    val_metric: float
    val_metric_name: str
    test_metrics: Dict[str, Any] = Field(default_factory=dict)
    checkpoint: str


class SensitivityRecord(BaseModel):
    """Counterfactual measures of one model"""
    model: str
    sensitivities: Dict[str, float] = Field(description="S_X per variable")
    ctf_accuracy: Optional[float] = None
    ctf_r2: Optional[float] = None
    heldout_dependence: Optional[float] = Field(default=None, description="sDISCO(Y_hat, B | Y) on held-out data")


class PathwayReport(BaseModel):
    """Pathway effects of Y on the prediction for one (y0, y1, yhat) triple"""
    y0: int
    y1: int
    yhat: int
    tv: float
    ctf_stable: float
    ctf_ie: float
    ctf_se: float
    decomposition_residual: float = Field(description="Residual with P(w,z | y0) weights")
    decomposition_residual_y1: float = Field(description="Residual with P(w,z | y1) weights")


class StabilityCertificate(BaseModel):
    is_ci: bool
    max_ie: float
    max_se: float
    de_spread: float


class BenchRecord(BaseModel):
    estimator: str
    n: int
    seconds: float
    peak_floats: int
    checksum: str


def load_config(path: Path, model: Type[ConfigT]) -> ConfigT:
    """
    Load and validate a JSON command config

    Args:
        path: Path to the JSON document
        model: Pydantic model to validate against

    Returns:
        Validated config (pydantic ValidationError on schema problems)
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path}: invalid JSON ({e})") from e
    return model.model_validate(data)
