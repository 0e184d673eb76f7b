"""Multi-dimensional knapsack. Objective is evaluated as -profit so every
task in the package minimizes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .base import Evaluation


@dataclass(frozen=True, eq=False)
class MkpInstance:
    profits: np.ndarray  # (n,) positive ints
    weights: np.ndarray  # (d, n) non-negative ints; one row per constraint
    capacities: np.ndarray  # (d,) positive ints
    reference_optimum: float | None = None  # stored under the minimization convention
    reference_kind: str | None = None
    name: str = "mkp"

    def __post_init__(self) -> None:
        object.__setattr__(self, "profits", np.asarray(self.profits, dtype=np.int64))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.int64))
        object.__setattr__(self, "capacities", np.asarray(self.capacities, dtype=np.int64))
        if self.profits.ndim != 1 or np.any(self.profits <= 0):
            raise ValueError("profits must be positive")
        if self.weights.ndim != 2 or self.weights.shape[1] != self.profits.size:
            raise ValueError("weights must be (constraints, items)")
        if np.any(self.weights < 0):
            raise ValueError("weights must be non-negative")
        if self.capacities.shape != (self.weights.shape[0],) or np.any(self.capacities <= 0):
            raise ValueError("capacities must be positive, one per constraint")
        if np.any(self.capacities > self.weights.sum(axis=1)):
            raise ValueError("each capacity must not exceed its constraint's total weight")

    @property
    def n(self) -> int:
        return int(self.profits.size)

    @property
    def d(self) -> int:
        return int(self.weights.shape[0])

    @property
    def task(self) -> str:
        return "mkp"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MkpInstance):
            return NotImplemented
        return (
            np.array_equal(self.profits, other.profits)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.capacities, other.capacities)
            and self.reference_optimum == other.reference_optimum
            and self.name == other.name
        )


def selection_profit(instance: MkpInstance, selection: Sequence[int]) -> int:
    sel = np.asarray(selection, dtype=bool)
    return int(instance.profits[sel].sum())


def evaluate(instance: MkpInstance, selection: Sequence[int]) -> Evaluation:
    """Selection is a 0/1 vector over items; objective is -profit."""
    sel = np.asarray(selection)
    if sel.shape != (instance.n,):
        raise ValueError(f"selection must have length {instance.n}")
    sel = sel.astype(bool)
    used = instance.weights[:, sel].sum(axis=1)
    if np.any(used > instance.capacities):
        j = int(np.argmax(used - instance.capacities))
        return Evaluation(
            feasible=False,
            violation=f"constraint {j} uses {used[j]} of capacity {instance.capacities[j]}",
        )
    profit = float(instance.profits[sel].sum())
    return Evaluation(feasible=True, objective=-profit if profit else 0.0)


def generate(n: int, d: int, seed: int, name: str | None = None) -> MkpInstance:
    """Profits and weights i.i.d. from {1..100}; each capacity is half the
    corresponding constraint's total weight (floored)."""
    if n < 1 or d < 1:
        raise ValueError("need at least one item and one constraint")
    rng = np.random.default_rng(seed)
    profits = rng.integers(1, 101, size=n)
    weights = rng.integers(1, 101, size=(d, n))
    capacities = weights.sum(axis=1) // 2
    return MkpInstance(
        profits=profits,
        weights=weights,
        capacities=capacities,
        name=name or f"mkp-n{n}-d{d}-s{seed}",
    )


ORACLE_MAX_N = 20


def oracle_optimum(instance: MkpInstance) -> float:
    """Exact optimum (as -profit) for n <= 20 by exhausting all selections."""
    n = instance.n
    if n > ORACLE_MAX_N:
        raise ValueError(f"exact MKP oracle limited to n <= {ORACLE_MAX_N}, got {n}")
    best = 0
    chunk = 1 << 14
    bits = np.arange(n)
    for start in range(0, 1 << n, chunk):
        masks = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
        sel = ((masks[:, None] >> bits[None, :]) & 1).astype(np.int64)  # (chunk, n)
        used = sel @ instance.weights.T  # (chunk, d)
        feasible = np.all(used <= instance.capacities[None, :], axis=1)
        if np.any(feasible):
            profits = sel[feasible] @ instance.profits
            best = max(best, int(profits.max()))
    return -float(best)


def profit_upper_bound(instance: MkpInstance) -> float:
    """Certified profit upper bound: the fractional (greedy by profit density)
    relaxation of each single constraint, minimized over constraints."""
    best = float(instance.profits.sum())
    for j in range(instance.d):
        w = instance.weights[j].astype(np.float64)
        cap = float(instance.capacities[j])
        free = w == 0
        ub = float(instance.profits[free].sum())
        dens_order = np.argsort(-(instance.profits[~free] / w[~free]))
        idx = np.nonzero(~free)[0][dens_order]
        remaining = cap
        for i in idx:
            if w[i] <= remaining:
                ub += float(instance.profits[i])
                remaining -= w[i]
            else:
                ub += float(instance.profits[i]) * remaining / w[i]
                break
        best = min(best, ub)
    return best


def reference_bound(instance: MkpInstance) -> float:
    """Optimum-side reference under the minimization convention: -upper bound."""
    return -profit_upper_bound(instance)
