"""Capacitated VRP: uniform Euclidean instances with integer demands."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tsp
from .base import Evaluation


@dataclass(frozen=True, eq=False)
class CvrpInstance:
    depot: np.ndarray  # (2,)
    customers: np.ndarray  # (n, 2)
    demands: np.ndarray  # (n,) positive ints
    capacity: int
    reference_optimum: float | None = None
    reference_kind: str | None = None
    name: str = "cvrp"

    def __post_init__(self) -> None:
        object.__setattr__(self, "depot", np.asarray(self.depot, dtype=np.float64))
        object.__setattr__(self, "customers", np.asarray(self.customers, dtype=np.float64))
        object.__setattr__(self, "demands", np.asarray(self.demands, dtype=np.int64))
        if self.depot.shape != (2,):
            raise ValueError("depot must be a single 2-D point")
        if self.customers.ndim != 2 or self.customers.shape[1] != 2:
            raise ValueError("customers must be an (n, 2) array")
        if self.demands.shape[0] != self.customers.shape[0]:
            raise ValueError("demands must match customer count")
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")
        if np.any(self.demands < 1) or np.any(self.demands > self.capacity):
            raise ValueError("every demand must lie in [1, capacity]")

    @property
    def n(self) -> int:
        return int(self.customers.shape[0])

    @property
    def task(self) -> str:
        return "cvrp"

    def all_points(self) -> np.ndarray:
        """Depot (index 0) followed by customers (1..n)."""
        return np.vstack([self.depot[None, :], self.customers])

    def distance_matrix(self) -> np.ndarray:
        pts = self.all_points()
        diff = pts[:, None, :] - pts[None, :, :]
        return np.sqrt((diff * diff).sum(axis=2))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CvrpInstance):
            return NotImplemented
        return (
            np.array_equal(self.depot, other.depot)
            and np.array_equal(self.customers, other.customers)
            and np.array_equal(self.demands, other.demands)
            and self.capacity == other.capacity
            and self.reference_optimum == other.reference_optimum
            and self.name == other.name
        )


def route_set_cost(instance: CvrpInstance, routes: Sequence[Sequence[int]],
                   dist: np.ndarray | None = None) -> float:
    """Total length of depot-anchored routes; customer indices are 0-based."""
    d = instance.distance_matrix() if dist is None else dist
    total = 0.0
    for route in routes:
        if not route:
            continue
        idx = np.asarray(route, dtype=np.intp) + 1  # depot is matrix row 0
        total += d[0, idx[0]] + d[idx[-1], 0] + float(d[idx[:-1], idx[1:]].sum())
    return total


def evaluate(instance: CvrpInstance, routes: Sequence[Sequence[int]]) -> Evaluation:
    seen = np.zeros(instance.n, dtype=np.int64)
    for route in routes:
        load = 0
        for c in route:
            if not 0 <= c < instance.n:
                raise ValueError(f"customer index {c} out of range")
            seen[c] += 1
            load += int(instance.demands[c])
        if load > instance.capacity:
            return Evaluation(
                feasible=False,
                violation=f"route load {load} exceeds capacity {instance.capacity}",
            )
    if np.any(seen != 1):
        return Evaluation(feasible=False, violation="each customer must be served exactly once")
    return Evaluation(feasible=True, objective=route_set_cost(instance, routes))


def generate(n: int, seed: int, name: str | None = None) -> CvrpInstance:
    """Uniform coords, demands i.i.d. from {1..9}, capacity ceil(0.5 n).

    For n < 18 the capacity falls below 9, so the demand range is clamped to
    the capacity to keep every demand servable.
    """
    if n < 1:
        raise ValueError("CVRP needs at least one customer")
    rng = np.random.default_rng(seed)
    depot = rng.random(2)
    customers = rng.random((n, 2))
    capacity = int(np.ceil(0.5 * n))
    demands = rng.integers(1, min(9, capacity) + 1, size=n)
    return CvrpInstance(
        depot=depot,
        customers=customers,
        demands=demands,
        capacity=capacity,
        name=name or f"cvrp-n{n}-s{seed}",
    )


ORACLE_MAX_N = 8


def oracle_optimum(instance: CvrpInstance) -> float:
    """Exact optimum for n <= 8: optimal single-route cost per feasible subset
    (visited-set DP), then a set-partition DP over customer subsets."""
    n = instance.n
    if n > ORACLE_MAX_N:
        raise ValueError(f"exact CVRP oracle limited to n <= {ORACLE_MAX_N}, got {n}")
    d = instance.distance_matrix()
    demands = instance.demands
    full = (1 << n) - 1
    inf = float("inf")

    # dp[mask][j]: min cost of a path depot -> visits mask -> ends at customer j
    dp = [[inf] * n for _ in range(1 << n)]
    for j in range(n):
        dp[1 << j][j] = d[0, j + 1]
    for mask in range(1, 1 << n):
        row = dp[mask]
        for last in range(n):
            cost = row[last]
            if cost == inf:
                continue
            for nxt in range(n):
                if (mask >> nxt) & 1:
                    continue
                new = cost + d[last + 1, nxt + 1]
                nm = mask | (1 << nxt)
                if new < dp[nm][nxt]:
                    dp[nm][nxt] = new

    route_cost = [inf] * (1 << n)
    route_cost[0] = 0.0
    for mask in range(1, 1 << n):
        load = sum(int(demands[j]) for j in range(n) if (mask >> j) & 1)
        if load > instance.capacity:
            continue
        route_cost[mask] = min(
            dp[mask][j] + d[j + 1, 0] for j in range(n) if (mask >> j) & 1
        )

    part = [inf] * (1 << n)
    part[0] = 0.0
    for mask in range(1, 1 << n):
        low = mask & (-mask)  # anchor the lowest customer to avoid duplicates
        sub = mask
        best = inf
        while sub:
            if sub & low and route_cost[sub] < inf and part[mask ^ sub] < inf:
                cand = route_cost[sub] + part[mask ^ sub]
                if cand < best:
                    best = cand
            sub = (sub - 1) & mask
        part[mask] = best
    return part[full]


def lower_bound(instance: CvrpInstance) -> float:
    """Certified lower bound: any route set, concatenated and shortcut, is a
    tour over depot+customers, so the TSP bound on those points applies."""
    pts = instance.all_points()
    if pts.shape[0] < 3:
        diff = pts[0] - pts[1]
        return 2.0 * float(np.sqrt((diff * diff).sum()))
    return tsp.lower_bound(tsp.TspInstance(coords=pts, name=f"{instance.name}-lb"))
