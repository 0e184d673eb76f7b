"""Euclidean TSP: instances, generators, evaluation, and the exact oracle.

Synthetic instances use exact Euclidean distances; TSPLIB instances use the
benchmark's nearest-integer rounding (see :mod:`trajevo.problems.tsplib`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import minimum_spanning_tree

from .base import Evaluation

PATTERNS = ("uniform", "clustered", "jittered_grid", "ring", "elongated")

# documented generator defaults: the pattern names are fixed, these knobs are
# our choices (kept configurable through generate())
N_CLUSTERS = 5
CLUSTER_STD = 0.05
GRID_JITTER = 0.02
RING_RADIUS = 0.4
RING_NOISE = 0.02
ELONGATED_ASPECT = 4.0


@dataclass(frozen=True, eq=False)
class TspInstance:
    coords: np.ndarray  # (n, 2) float64
    reference_optimum: float | None = None
    reference_kind: str | None = None
    round_distances: bool = False
    name: str = "tsp"

    def __post_init__(self) -> None:
        coords = np.asarray(self.coords, dtype=np.float64)
        object.__setattr__(self, "coords", coords)
        if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] < 3:
            raise ValueError("TSP needs an (n, 2) coordinate array with n >= 3")
        if not np.all(np.isfinite(coords)):
            raise ValueError("TSP coordinates must be finite")

    @property
    def n(self) -> int:
        return int(self.coords.shape[0])

    @property
    def task(self) -> str:
        return "tsp"

    def distance_matrix(self) -> np.ndarray:
        diff = self.coords[:, None, :] - self.coords[None, :, :]
        d = np.sqrt((diff * diff).sum(axis=2))
        if self.round_distances:
            d = np.floor(d + 0.5)  # nearest-integer rounding, TSPLIB EUC_2D
        return d

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TspInstance):
            return NotImplemented
        return (
            np.array_equal(self.coords, other.coords)
            and self.reference_optimum == other.reference_optimum
            and self.round_distances == other.round_distances
            and self.name == other.name
        )


def tour_length(instance: TspInstance, tour: Sequence[int], dist: np.ndarray | None = None) -> float:
    d = instance.distance_matrix() if dist is None else dist
    t = np.asarray(tour, dtype=np.intp)
    return float(d[t, np.roll(t, -1)].sum())


def evaluate(instance: TspInstance, tour: Sequence[int]) -> Evaluation:
    t = np.asarray(tour, dtype=np.intp)
    if t.size != instance.n:
        raise ValueError(f"tour length {t.size} does not match instance size {instance.n}")
    counts = np.bincount(t, minlength=instance.n) if t.size and t.min() >= 0 and t.max() < instance.n else None
    if counts is None or np.any(counts != 1):
        return Evaluation(feasible=False, violation="tour is not a permutation of all nodes")
    return Evaluation(feasible=True, objective=tour_length(instance, t))


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def _uniform(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.random((n, 2))


def _clustered(rng: np.random.Generator, n: int) -> np.ndarray:
    centers = rng.random((N_CLUSTERS, 2))
    which = rng.integers(0, N_CLUSTERS, size=n)
    pts = centers[which] + rng.normal(0.0, CLUSTER_STD, size=(n, 2))
    return np.clip(pts, 0.0, 1.0)


def _jittered_grid(rng: np.random.Generator, n: int) -> np.ndarray:
    side = int(np.ceil(np.sqrt(n)))
    xs, ys = np.meshgrid(np.linspace(0.0, 1.0, side), np.linspace(0.0, 1.0, side))
    cells = np.column_stack([xs.ravel(), ys.ravel()])[:n]
    return np.clip(cells + rng.normal(0.0, GRID_JITTER, size=(n, 2)), 0.0, 1.0)


def _ring(rng: np.random.Generator, n: int) -> np.ndarray:
    angles = rng.uniform(0.0, 2.0 * np.pi, size=n)
    radius = RING_RADIUS + rng.normal(0.0, RING_NOISE, size=n)
    pts = 0.5 + np.column_stack([radius * np.cos(angles), radius * np.sin(angles)])
    return np.clip(pts, 0.0, 1.0)


def _elongated(rng: np.random.Generator, n: int) -> np.ndarray:
    pts = rng.random((n, 2))
    pts[:, 1] /= ELONGATED_ASPECT
    return pts


_PATTERN_FNS = {
    "uniform": _uniform,
    "clustered": _clustered,
    "jittered_grid": _jittered_grid,
    "ring": _ring,
    "elongated": _elongated,
}


def generate(n: int, seed: int, pattern: str = "mixture", name: str | None = None) -> TspInstance:
    """Generate a synthetic instance on [0,1]^2, deterministic for a seed.

    ``pattern="mixture"`` draws one of the five layout patterns with equal
    probability; a specific pattern name forces it.
    """
    if n < 3:
        raise ValueError(f"TSP size must be >= 3, got {n}")
    rng = np.random.default_rng(seed)
    chosen = pattern
    if pattern == "mixture":
        chosen = PATTERNS[int(rng.integers(0, len(PATTERNS)))]
    elif pattern not in _PATTERN_FNS:
        raise ValueError(f"unknown TSP pattern {pattern!r}")
    coords = _PATTERN_FNS[chosen](rng, n)
    return TspInstance(coords=coords, name=name or f"tsp-n{n}-s{seed}")


# ---------------------------------------------------------------------------
# exact oracle (dynamic program over visited-sets) and certified lower bound
# ---------------------------------------------------------------------------

ORACLE_MAX_N = 15


def held_karp(instance: TspInstance) -> float:
    """Exact optimal tour length for n <= 15 via the subset DP."""
    n = instance.n
    if n > ORACLE_MAX_N:
        raise ValueError(f"exact TSP oracle limited to n <= {ORACLE_MAX_N}, got {n}")
    d = instance.distance_matrix()
    full = (1 << n) - 1
    inf = float("inf")
    dp = [[inf] * n for _ in range(1 << n)]
    dp[1][0] = 0.0
    for mask in range(1, 1 << n):
        if not mask & 1:
            continue
        row = dp[mask]
        for last in range(n):
            cost = row[last]
            if cost == inf or not (mask >> last) & 1:
                continue
            dl = d[last]
            for nxt in range(1, n):
                if (mask >> nxt) & 1:
                    continue
                new = cost + dl[nxt]
                nm = mask | (1 << nxt)
                if new < dp[nm][nxt]:
                    dp[nm][nxt] = new
    return min(dp[full][last] + d[last][0] for last in range(1, n))


def lower_bound(instance: TspInstance) -> float:
    """Certified tour-length lower bound: max(half-degree-2 bound, MST).

    Every node has two tour edges, each at least its two nearest-neighbor
    distances; the tour also contains a spanning connected subgraph, so the
    MST weight is a bound too.
    """
    d = instance.distance_matrix().copy()
    np.fill_diagonal(d, np.inf)
    two_nn = np.sort(d, axis=1)[:, :2].sum() / 2.0
    np.fill_diagonal(d, 0.0)
    mst = float(minimum_spanning_tree(d).sum())
    return max(float(two_nn), mst)
