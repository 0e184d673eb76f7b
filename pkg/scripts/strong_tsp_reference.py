"""Best-known reference values for synthetic TSP instances.

Grinds each instance with a multi-start iterated local search over combined
2-opt + or-opt neighborhoods (full candidate coverage through the package's
knn machinery with a generous k), far stronger than any single evaluated
configuration. Used once to freeze reference optima for regression tests;
not part of the library surface.

Usage: python scripts/strong_tsp_reference.py <n> <count> <base_seed> <pattern> <seconds_per_instance>
"""

from __future__ import annotations

import json
import sys
import time

import numpy as np

from trajevo.problems import tsp
from trajevo.solvers.clock import WallClock
from trajevo.solvers.config import GuidanceConfig, TspMechanism
from trajevo.solvers.gls import (
    _apply_or_opt,
    _apply_two_opt,
    _GlsState,
    _or_opt_candidates,
    _two_opt_candidates,
    knn_lists,
    nearest_neighbor_tour,
)

EPS = 1e-12


def descend(state: _GlsState) -> None:
    """Alternate 2-opt and or-opt first-improvement until neither helps."""
    while True:
        moved = False
        while True:
            lo, hi, delta = _two_opt_candidates(state)
            hits = np.nonzero(delta < -EPS)[0]
            if not hits.size:
                break
            m = int(hits[0])
            _apply_two_opt(state, int(lo[m]), int(hi[m]))
            moved = True
        for seg_len in (1, 2, 3):
            while True:
                s, vpos, delta = _or_opt_candidates(state, seg_len)
                hits = np.nonzero(delta < -EPS)[0]
                if not hits.size:
                    break
                m = int(hits[0])
                _apply_or_opt(state, int(s[m]), int(vpos[m]), seg_len)
                moved = True
        if not moved:
            return


def strong_best(instance, seconds: float, starts: int = 4) -> float:
    d = instance.distance_matrix()
    knn = knn_lists(d, min(20, instance.n - 1))
    best = np.inf
    deadline = time.perf_counter() + seconds
    for start in range(starts):
        rng = np.random.default_rng(start)
        if start == 0:
            tour = nearest_neighbor_tour(d)
        else:
            tour = rng.permutation(instance.n)
        state = _GlsState(d, np.asarray(tour, dtype=np.intp), knn, guided=False, gls_lambda=0.3)
        descend(state)
        best_state_cost = state.cost
        best_tour = state.tour.copy()
        while time.perf_counter() < deadline * (start + 1) / starts:
            t = best_tour.copy()
            n = t.size
            cuts = np.sort(rng.integers(1, n, size=3))
            a, b, c = (int(x) for x in cuts)
            if not a < b < c:
                continue
            kicked = np.concatenate([t[:a], t[b:c], t[a:b], t[c:]])
            state = _GlsState(d, kicked, knn, guided=False, gls_lambda=0.3)
            descend(state)
            if state.cost < best_state_cost - EPS:
                best_state_cost = state.cost
                best_tour = state.tour.copy()
        best = min(best, best_state_cost)
    return float(best)


def main() -> None:
    n, count, base_seed = int(sys.argv[1]), int(sys.argv[2]), int(sys.argv[3])
    pattern = sys.argv[4]
    seconds = float(sys.argv[5])
    refs = {}
    for i in range(count):
        inst = tsp.generate(n=n, seed=base_seed + i, pattern=pattern)
        t0 = time.time()
        refs[inst.name] = strong_best(inst, seconds)
        print(f"{inst.name}: {refs[inst.name]:.6f}  ({time.time()-t0:.0f}s)", flush=True)
    print(json.dumps(refs, indent=2))


if __name__ == "__main__":
    main()
