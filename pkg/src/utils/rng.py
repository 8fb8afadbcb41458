"""
Named, seedable, splittable random number generation

Every random draw in the toolkit comes from `numpy.random.Generator`
instances backed by PCG64. A stream is identified by the root seed and a
path of names; each name is hashed with CRC-32 into a SeedSequence spawn
key, so `stream(7, "blob", "exogenous")` yields the same numbers in any
process and in any order of creation.
"""
import zlib
from typing import Sequence, Union

import numpy as np

StreamName = Union[str, int]


def _name_key(name: StreamName) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name)
    return zlib.crc32(str(name).encode("utf-8"))


def seed_sequence(seed: int, *names: StreamName) -> np.random.SeedSequence:
    """SeedSequence for the named sub-stream of a root seed"""
    return np.random.SeedSequence(
        entropy=int(seed),
        spawn_key=tuple(_name_key(n) for n in names)
    )


def stream(seed: int, *names: StreamName) -> np.random.Generator:
    """
    Create a deterministic generator for a named sub-stream

    Args:
        seed: Root seed of the run
        *names: Path of stream names (strings or integers)

    Returns:
        numpy Generator backed by PCG64
    """
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *names)))


def derived_seeds(seed: int, name: StreamName, count: int) -> Sequence[int]:
    """Independent integer seeds for `count` parallel work items"""
    ss = seed_sequence(seed, name)
    return [int(child.generate_state(1, dtype=np.uint32)[0]) for child in ss.spawn(count)]
