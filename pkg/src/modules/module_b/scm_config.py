"""
Configuration constants for Module B - SCM Dataset Generators
"""
import math
from typing import Dict, Tuple

DEFAULT_RESOLUTION: Dict[str, int] = {
    "blob": 32,
    "dsprites": 64
}

# ===== Blob =====
BLOB_SIGMA_PX: float = 3.0
BLOB_CAUSAL_CENTRE: Tuple[float, float] = (8.0, 8.0)     # upper-left quadrant
BLOB_BIAS_CENTRE: Tuple[float, float] = (24.0, 24.0)     # lower-right quadrant
BLOB_U_BIAS_STD: float = 0.1
BLOB_EPS_CAUSAL_STD: float = 0.1

# ===== dSprites: position task =====
DSPRITES_U_X_RANGE: Tuple[float, float] = (0.0, math.pi / 2)
DSPRITES_U_Y_STD: float = 0.15
DSPRITES_SCALE_RANGE: Tuple[float, float] = (0.5, 0.7)
DSPRITES_EPS_X_STD: float = 0.01
DSPRITES_EPS_Y1_STD: float = 0.1
DSPRITES_EPS_Y2_STD: float = 0.2
# Ranges of the raw positions mapped onto the canvas
DSPRITES_X_POS_RANGE: Tuple[float, float] = (-0.05, 1.05)
DSPRITES_Y_POS_RANGE: Tuple[float, float] = (0.0, 5.0)

# ===== dSprites: scale task =====
SCALE_FLIP_PROB: float = 0.1
SCALE_BASE: float = 0.5
SCALE_STEP: float = 0.1
SCALE_JITTER: float = 0.1
SCALE_POS_OFFSET: float = 0.2
SCALE_POS_STEP: float = 0.3
SCALE_POS_JITTER: float = 0.3

# ===== YaleB-like =====
YALEB_POSES: int = 3
YALEB_AZIMUTH_RANGE: Tuple[float, float] = (-130.0, 130.0)
YALEB_ELEVATION_RANGE: Tuple[float, float] = (-40.0, 90.0)
YALEB_SCORE_DIRECTION: Tuple[float, float] = (1.0, 1.0)
YALEB_KEEP_MATCH: float = 1.0
YALEB_KEEP_OTHER: float = 0.05

# ===== FairFace-like =====
FAIRFACE_KEEP_ALIGNED: float = 0.9
FAIRFACE_KEEP_CONFLICT: float = 0.1

# ===== Waterbirds =====
WATERBIRDS_P_BIRD: float = 0.5
WATERBIRDS_P_MATCH: float = 0.9

# Embedding noise of the tabular families; the target channel gets this
# multiple of the bias channel's noise so the bias is the easier cue
DEFAULT_FEATURE_NOISE: float = 0.2
TARGET_NOISE_FACTOR: float = 2.0

# Selection families draw candidates in chunks of this size until n units are kept
SELECTION_CHUNK: int = 4096

