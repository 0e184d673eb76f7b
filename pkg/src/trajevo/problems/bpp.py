"""Online bin packing: fixed item streams, capacity C, volume lower bound."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .base import Evaluation

# Weibull item-size defaults (shape/scale), rounded up and clamped to [1, C].
WEIBULL_SHAPE = 3.0
WEIBULL_SCALE = 45.0


@dataclass(frozen=True, eq=False)
class BppInstance:
    items: np.ndarray  # (m,) positive int sizes, arrival order
    capacity: int
    name: str = "bpp"

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", np.asarray(self.items, dtype=np.int64))
        if self.capacity <= 0:
            raise ValueError("capacity must be a positive integer")
        if self.items.ndim != 1 or self.items.size == 0:
            raise ValueError("items must be a non-empty 1-D sequence")
        if np.any(self.items <= 0) or np.any(self.items > self.capacity):
            raise ValueError("every item size must lie in (0, capacity]")

    @property
    def n_items(self) -> int:
        return int(self.items.size)

    @property
    def task(self) -> str:
        return "bpp"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BppInstance):
            return NotImplemented
        return (
            np.array_equal(self.items, other.items)
            and self.capacity == other.capacity
            and self.name == other.name
        )


def evaluate(instance: BppInstance, assignment: Sequence[int]) -> Evaluation:
    """Assignment maps each item (in arrival order) to a bin index."""
    a = np.asarray(assignment, dtype=np.int64)
    if a.shape != instance.items.shape:
        raise ValueError("assignment length must match item count")
    if np.any(a < 0):
        raise ValueError("bin indices must be non-negative")
    loads = np.bincount(a, weights=instance.items.astype(np.float64))
    if np.any(loads > instance.capacity):
        worst = int(np.argmax(loads))
        return Evaluation(
            feasible=False,
            violation=f"bin {worst} load {loads[worst]:.0f} exceeds capacity {instance.capacity}",
        )
    return Evaluation(feasible=True, objective=float(np.count_nonzero(loads)))


def generate(
    n_items: int,
    capacity: int,
    seed: int,
    shape: float = WEIBULL_SHAPE,
    scale: float = WEIBULL_SCALE,
    name: str | None = None,
) -> BppInstance:
    """Weibull-sampled item sizes, rounded up and clamped into [1, capacity]."""
    if capacity <= 0:
        raise ValueError("capacity must be positive")
    if n_items <= 0:
        raise ValueError("need at least one item")
    rng = np.random.default_rng(seed)
    raw = scale * rng.weibull(shape, size=n_items)
    sizes = np.clip(np.ceil(raw).astype(np.int64), 1, capacity)
    return BppInstance(items=sizes, capacity=capacity, name=name or f"bpp-m{n_items}-c{capacity}-s{seed}")


def lower_bound(instance: BppInstance) -> int:
    """Volume relaxation: ceil(sum of sizes / capacity)."""
    return int(math.ceil(int(instance.items.sum()) / instance.capacity))
