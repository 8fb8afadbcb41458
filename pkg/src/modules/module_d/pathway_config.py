"""
Configuration constants for Module D - Causal Pathway Analyzer
"""
from typing import List

SCM_DOCUMENT_VERSION: int = 1

# Largest number of exogenous states (and joint cells) enumerated exactly
MAX_ENUMERATED_STATES: int = 10_000_000

# Exogenous distributions must sum to one within this
PROBABILITY_TOL: float = 1e-12

# Identity / independence checks
DECOMPOSITION_TOL: float = 1e-12
CI_TOL: float = 1e-12
THEOREM_TOL: float = 1e-12

# Exhaustive predictor-table search bounds
MAX_TABLE_VARIABLES: int = 4
MAX_TABLE_CARDINALITY: int = 3

# Random SAM instances
SAM_VARIABLES: List[str] = ["Z", "Y", "W", "X"]
SAM_EXOGENOUS_P_RANGE = (0.1, 0.9)
SAM_MAX_REDRAWS: int = 1000
# Exogenous states beyond the value count in three-or-more-valued instances
SAM_EXTRA_EXOGENOUS_STATES: int = 1
X_PARENT_MODES: List[str] = ["all", "target_only"]

# Counterfactual sensitivity defaults
DEFAULT_UNITS: int = 500
DEFAULT_INTERVENTIONS: int = 5
