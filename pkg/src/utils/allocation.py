"""
Float-buffer allocation accounting

Estimator code paths report every matrix they materialize through
`record()`. When an `AllocationTracker` is active the sizes are tallied,
otherwise `record()` is a no-op.
"""
import logging
import threading
from dataclasses import dataclass, field
from typing import List, Tuple

logger = logging.getLogger(__name__)

_state = threading.local()


@dataclass
class AllocationStats:
    """Tally of buffers created inside one tracking scope"""
    buffers: int = 0
    total_floats: int = 0
    largest_buffer: int = 0
    shapes: List[Tuple[int, ...]] = field(default_factory=list)

    @property
    def peak_floats(self) -> int:
        """Upper bound on live auxiliary floats (nothing is assumed freed)"""
        return self.total_floats

    def to_dict(self) -> dict:
        return {
            "buffers": self.buffers,
            "total_floats": self.total_floats,
            "largest_buffer": self.largest_buffer,
            "peak_floats": self.peak_floats
        }


class AllocationTracker:
    """
    Context manager counting float buffers created in its scope

    Trackers nest; an inner scope's buffers are also counted by the outer one.

    Example:
        with AllocationTracker() as tracker:
            sdisco(A, B, W)
        print(tracker.stats.peak_floats)
    """

    def __init__(self, keep_shapes: bool = False):
        self.keep_shapes = keep_shapes
        self.stats = AllocationStats()

    def __enter__(self) -> "AllocationTracker":
        stack = _active_stack()
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _active_stack()
        stack.remove(self)
        logger.debug(
            f"Allocation scope closed: {self.stats.buffers} buffers, "
            f"{self.stats.total_floats} floats"
        )

    def _add(self, shape: Tuple[int, ...]) -> None:
        size = 1
        for dim in shape:
            size *= int(dim)
        self.stats.buffers += 1
        self.stats.total_floats += size
        self.stats.largest_buffer = max(self.stats.largest_buffer, size)
        if self.keep_shapes:
            self.stats.shapes.append(tuple(int(d) for d in shape))


def _active_stack() -> List[AllocationTracker]:
    if not hasattr(_state, "stack"):
        _state.stack = []
    return _state.stack


def record(shape: Tuple[int, ...]) -> None:
    """Report a newly materialized float buffer of the given shape"""
    for tracker in _active_stack():
        tracker._add(shape)

