"""
Configuration constants for Module E - Scaling Benchmark
"""
from typing import List

DEFAULT_SIZES: List[int] = [128, 512, 2048]
DEFAULT_REPS: int = 5

# Estimators timed at every n (the broadcast one only up to its capacity bound)
ESTIMATORS: List[str] = ["naive", "sdisco", "broadcast"]

# Above this n the per-row naive loop is timed once instead of `reps` times
NAIVE_SINGLE_REP_N: int = 512

# Results are compared after rounding to this many decimals
CHECKSUM_DECIMALS: int = 9

# Expected growth of the sDISCO allocation in n
ALLOCATION_EXPONENT: float = 2.0
ALLOCATION_EXPONENT_TOL: float = 0.2

# Input point sets: predictions in R^2, bias in R^1, conditioning in R^1
PREDICTION_DIM: int = 2
BIAS_DIM: int = 1
CONDITION_DIM: int = 1
