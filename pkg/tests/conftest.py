"""
Shared fixtures: a seeded generator and a small discrete SCM
"""
import numpy as np
import pytest

from src.modules.module_d.scm import DiscreteSCM
from src.utils.rng import stream


@pytest.fixture
def rng() -> np.random.Generator:
    return stream(1234, "tests")


def copy_z_scm(p_z: float = 0.5, p_flip_y: float = 0.2, p_flip_w: float = 0.3) -> DiscreteSCM:
    """
    Z -> Y -> W with the input X an exact copy of Z

    Y = Z xor U_Y, W = Y xor U_W, X = Z.
    """
    xor = np.array([[0, 1], [1, 0]])
    return DiscreteSCM(
        variables=["Z", "Y", "W", "X"],
        cardinality={"Z": 2, "Y": 2, "W": 2, "X": 2},
        parents={"Z": [], "Y": ["Z"], "W": ["Y"], "X": ["Z"]},
        exogenous={
            "Z": np.array([1.0 - p_z, p_z]),
            "Y": np.array([1.0 - p_flip_y, p_flip_y]),
            "W": np.array([1.0 - p_flip_w, p_flip_w]),
            "X": np.array([1.0])
        },
        mechanisms={
            "Z": np.array([0, 1]),
            "Y": xor,
            "W": xor,
            "X": np.array([[0], [1]])
        },
        target="Y",
        mediators=["W"],
        backdoor=["Z"],
        inputs=["X"]
    )


@pytest.fixture
def copy_z():
    return copy_z_scm()
