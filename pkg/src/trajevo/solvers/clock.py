"""Run clocks: real wall time or a deterministic work-unit counter.

Solvers read time only through this interface. The wall clock is the default
and measures real elapsed seconds. The work clock converts counted elementary
cost evaluations into virtual seconds, which makes entire runs (and therefore
evolution event logs) bit-reproducible; it is selected via run configuration
where replayability matters more than physical seconds.
"""

from __future__ import annotations

import time

# one work unit ~ one candidate-move cost evaluation; the calibration constant
# keeps virtual seconds roughly commensurate with interpreter throughput
WORK_SECONDS_PER_UNIT = 2e-7


class WallClock:
    kind = "wall"

    def __init__(self) -> None:
        self._t0 = time.perf_counter()

    def start(self) -> None:
        self._t0 = time.perf_counter()

    def now(self) -> float:
        return time.perf_counter() - self._t0

    def tick(self, units: int) -> None:  # wall time advances on its own
        pass


class WorkClock:
    kind = "work"

    def __init__(self, seconds_per_unit: float = WORK_SECONDS_PER_UNIT) -> None:
        self._units = 0
        self._spu = seconds_per_unit

    def start(self) -> None:
        self._units = 0

    def now(self) -> float:
        return self._units * self._spu

    def tick(self, units: int) -> None:
        self._units += int(units)


def make_clock(kind: str):
    if kind == "wall":
        return WallClock()
    if kind == "work":
        return WorkClock()
    raise ValueError(f"unknown clock kind {kind!r}")
