"""
Configuration constants for Module A - Dependence Estimators
"""
from typing import List

# Hyperparameter grid for the conditioning-kernel bandwidth
BANDWIDTH_GRID: List[float] = [1.0, 0.9, 0.5, 0.1, 0.01, 0.001]

# Share of the batch used as reference points by DISCO_m
M_FRACTION: float = 0.20

# Smallest batch on which local centering is informative
MIN_BATCH: int = 4

# Tolerances
ROW_SUM_TOL: float = 1e-9
RATIO_TOL: float = 1e-9

# Largest n accepted by the (n, n, n) broadcast estimator (about 134 MB per tensor)
NAIVE_BROADCAST_MAX_N: int = 256

# Exponent of the bandwidth decay used in consistency checks
BANDWIDTH_DECAY: float = -0.2


# Columns whose std falls below this share of max(1, |mean|) count as constant
CONSTANT_STD_RTOL: float = 1e-12
