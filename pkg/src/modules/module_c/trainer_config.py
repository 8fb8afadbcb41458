"""
Configuration constants for Module C - Penalized Trainer
"""
from typing import List

# Penalty weight grid searched per dataset
LAMBDA_GRID: List[float] = [10.0, 5.0, 2.0, 1.0, 0.5, 0.1]

# Adam defaults
ADAM_BETA1: float = 0.9
ADAM_BETA2: float = 0.999
ADAM_EPS: float = 1e-8

# Points used for the median-heuristic bandwidth of the training targets
BANDWIDTH_SAMPLE: int = 1000

CHECKPOINT_MAGIC: bytes = b"DPRD"
CHECKPOINT_VERSION: int = 1

# Validation metric used for best-epoch selection
REGRESSION_METRIC: str = "r2"
CLASSIFICATION_METRIC: str = "balanced_accuracy"
GROUP_METRIC: str = "worst_group_accuracy"
