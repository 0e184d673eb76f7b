"""Greedy online assignment for bin packing: one irrevocable pass.

The trajectory is the completion residual: after t of m items,
V = (bins_used + items_remaining - lb) / lb, the gap of the best
currently-certified complete packing (every remaining item in its own bin).
It is non-increasing -- placing an item into an open bin lowers it, opening
a bin keeps it flat -- starts at the trivial-solution gap, and ends at the
final gap vs. the volume lower bound. Sampled every 1% of the stream.
"""

from __future__ import annotations

import numpy as np

from ..problems.bpp import BppInstance
from .config import GoaMechanism, SolverConfig

_BIG = 1e18


def choose_bin(residuals: np.ndarray, item: int, mech: GoaMechanism) -> int:
    """Index of the bin to receive ``item`` per the scoring rule, or -1 to
    open a new bin. Ties break toward the lowest index."""
    if residuals.size == 0:
        return -1
    leftovers = residuals - item
    feasible = leftovers >= 0
    if not np.any(feasible):
        return -1
    if mech.rule == "first_fit":
        return int(np.argmax(feasible))
    score = np.where(feasible, leftovers.astype(np.float64), _BIG)
    if mech.rule == "scored":
        # deprioritize awkward small leftovers (slivers) over clean ones
        sliver = feasible & (leftovers > 0) & (leftovers < mech.sliver_threshold)
        score = score + np.where(sliver, _BIG / 2.0, 0.0)
    return int(np.argmin(score))


def run_goa(config: SolverConfig, instance: BppInstance, f_star: float,
            horizon: float, seed: int, clock) -> dict:
    mech: GoaMechanism = config.mechanism
    items = instance.items
    m = instance.n_items
    lb = f_star
    if lb <= 0:
        raise ValueError("BPP reference (lower bound) must be positive")

    clock.start()
    residuals = np.empty(0, dtype=np.int64)
    assignment = np.empty(m, dtype=np.int64)
    stride = max(1, m // 100)  # 1% stream increments

    def completion_gap(bins_used: int, placed: int) -> float:
        certified = bins_used + (m - placed)
        return max((certified - lb) / lb, 0.0)

    raw = [(0.0, completion_gap(0, 0))]
    for t, item in enumerate(items):
        clock.tick(max(residuals.size, 1))
        pick = choose_bin(residuals, int(item), mech)
        if pick < 0:
            residuals = np.append(residuals, instance.capacity - int(item))
            pick = residuals.size - 1
        else:
            residuals[pick] -= int(item)
        assignment[t] = pick
        if (t + 1) % stride == 0:
            raw.append((clock.now(), completion_gap(residuals.size, t + 1)))

    t_end = clock.now()
    raw.append((t_end, completion_gap(residuals.size, m)))
    return {
        "raw": raw,
        "payload": assignment.tolist(),
        "objective": float(residuals.size),
        "t_run": t_end,
        "phase_seconds": {"assignment": t_end},
        "stop_reason": "stream_end",
    }
