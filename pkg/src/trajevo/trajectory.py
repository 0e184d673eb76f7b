"""Incumbent gap trajectories and the metrics computed from them.

A solver run is summarized as a piecewise-constant, non-increasing gap
trajectory: the relative gap of the best-so-far solution, time-stamped from
run start. This module folds raw event logs into such incumbent traces and
computes the scalar metrics used everywhere else in the package:

* ``log_residual``       -- floored log of a gap value
* ``time_avg_log_residual`` -- exact Riemann sum of the log trace over [0, T]
* ``decay_rate``         -- the effective log-space decay slope: the constant
  slope of a linear log trace anchored at the initial residual whose time
  average matches the run's. Larger means faster, more sustained convergence.
* ``terminal_log_residual`` -- log of the final incumbent gap
* ``alt_metrics``        -- simpler trajectory summaries (run end time,
  time to reach 10% of the initial gap, linear-space normalized AUC)

Everything here is pure and operates on immutable traces; times are treated
as data (the solver runner owns the clock).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "TracePoint",
    "IncumbentTrace",
    "MetricConfig",
    "AltMetrics",
    "fold_incumbent",
    "log_residual",
    "time_avg_log_residual",
    "decay_rate",
    "terminal_log_residual",
    "alt_metrics",
    "trace_to_json",
    "trace_from_json",
    "save_trace",
    "load_trace",
]


@dataclass(frozen=True)
class TracePoint:
    """One timestamped gap observation.

    ``gap`` is the dimensionless relative gap against a reference optimum or
    best-known value. Negative gaps indicate a bad reference and are rejected.
    """

    time: float
    gap: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.time) or self.time < 0.0:
            raise ValueError(f"trace point time must be finite and >= 0, got {self.time}")
        if not math.isfinite(self.gap) or self.gap < 0.0:
            raise ValueError(
                f"trace point gap must be finite and >= 0 (negative gap means a bad "
                f"reference), got {self.gap}"
            )


@dataclass(frozen=True)
class MetricConfig:
    """Numerical floor and evaluation horizon for trajectory metrics."""

    horizon: float
    floor: float = 1e-9

    def __post_init__(self) -> None:
        if not (self.floor > 0.0):
            raise ValueError(f"floor must be > 0, got {self.floor}")
        if not (self.horizon > 0.0):
            raise ValueError(f"horizon must be > 0, got {self.horizon}")


class IncumbentTrace:
    """Piecewise-constant best-so-far gap trajectory of one run.

    Invariants: times strictly increasing starting at 0, gaps non-increasing,
    ``last point time <= end_time <= horizon``. The value is constant on
    ``[end_time, horizon]`` (early-terminated runs extend their final value).

    ``initial_log_residual`` optionally pins the log residual of the shared
    initial construction; when unset it is derived from the first point's gap.
    Stored as two parallel float64 arrays so million-point synthetic traces
    stay cheap.
    """

    __slots__ = ("times", "gaps", "horizon", "end_time", "initial_log_residual")

    def __init__(
        self,
        times: np.ndarray | Sequence[float],
        gaps: np.ndarray | Sequence[float],
        horizon: float,
        end_time: float | None = None,
        initial_log_residual: float | None = None,
    ) -> None:
        t = np.asarray(times, dtype=np.float64)
        g = np.asarray(gaps, dtype=np.float64)
        if t.ndim != 1 or g.ndim != 1 or t.size != g.size or t.size == 0:
            raise ValueError("times and gaps must be equal-length, non-empty 1-D arrays")
        if not np.all(np.isfinite(t)) or not np.all(np.isfinite(g)):
            raise ValueError("trace contains non-finite values")
        if t[0] != 0.0:
            raise ValueError(f"first trace point must be at time 0, got {t[0]}")
        if t.size > 1 and not np.all(np.diff(t) > 0.0):
            raise ValueError("trace times must be strictly increasing")
        if np.any(g < 0.0):
            raise ValueError("trace gaps must be >= 0 (negative gap means a bad reference)")
        if t.size > 1 and np.any(np.diff(g) > 0.0):
            raise ValueError("incumbent gaps must be non-increasing")
        last = float(t[-1])
        if end_time is None:
            end_time = last
        if end_time < last:
            raise ValueError(f"end_time {end_time} precedes last point time {last}")
        if not (horizon >= end_time):
            raise ValueError(f"horizon {horizon} must cover end_time {end_time}")
        if not (horizon > 0.0):
            raise ValueError("horizon must be > 0")
        self.times = t
        self.gaps = g
        self.horizon = float(horizon)
        self.end_time = float(end_time)
        self.initial_log_residual = (
            None if initial_log_residual is None else float(initial_log_residual)
        )

    @classmethod
    def from_points(
        cls,
        points: Iterable[TracePoint],
        horizon: float,
        end_time: float | None = None,
        initial_log_residual: float | None = None,
    ) -> "IncumbentTrace":
        pts = list(points)
        return cls(
            [p.time for p in pts],
            [p.gap for p in pts],
            horizon,
            end_time=end_time,
            initial_log_residual=initial_log_residual,
        )

    @property
    def points(self) -> list[TracePoint]:
        return [TracePoint(float(t), float(g)) for t, g in zip(self.times, self.gaps)]

    @property
    def solved_at_start(self) -> bool:
        """True when the shared initial construction already has gap 0."""
        return float(self.gaps[0]) == 0.0

    def gap_at(self, tau: float) -> float:
        """Incumbent gap at time ``tau`` (piecewise-constant lookup)."""
        if tau < 0.0:
            raise ValueError("time must be >= 0")
        idx = int(np.searchsorted(self.times, tau, side="right")) - 1
        return float(self.gaps[idx])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IncumbentTrace):
            return NotImplemented
        return (
            np.array_equal(self.times, other.times)
            and np.array_equal(self.gaps, other.gaps)
            and self.horizon == other.horizon
            and self.end_time == other.end_time
            and self.initial_log_residual == other.initial_log_residual
        )

    def __repr__(self) -> str:
        return (
            f"IncumbentTrace(n={self.times.size}, horizon={self.horizon}, "
            f"end_time={self.end_time}, final_gap={self.gaps[-1]})"
        )


def fold_incumbent(
    raw: Sequence[TracePoint] | Iterable[TracePoint], horizon: float
) -> IncumbentTrace:
    """Fold a raw gap log into its incumbent (running-minimum) trace.

    Keeps the initial point plus every point where the running minimum
    strictly decreases; ties and regressions are dropped. The raw log's last
    timestamp is preserved as ``end_time`` so the run end survives folding.
    """
    pts = list(raw)
    if not pts:
        raise ValueError("cannot fold an empty trace")
    times = np.array([p.time for p in pts], dtype=np.float64)
    gaps = np.array([p.gap for p in pts], dtype=np.float64)
    if times[0] != 0.0:
        raise ValueError(f"first raw point must be at time 0, got {times[0]}")
    if np.any(np.diff(times) < 0.0):
        raise ValueError("raw trace times must be non-decreasing")
    if times[-1] > horizon:
        raise ValueError(f"raw trace extends past the horizon ({times[-1]} > {horizon})")
    running = np.minimum.accumulate(gaps)
    # points sharing a timestamp collapse to the running minimum at the last
    # of them (the value holding from that instant on)
    last_at_time = np.empty(times.size, dtype=bool)
    last_at_time[-1] = True
    last_at_time[:-1] = times[:-1] != times[1:]
    ctimes = times[last_at_time]
    crunning = running[last_at_time]
    keep = np.empty(ctimes.size, dtype=bool)
    keep[0] = True
    keep[1:] = crunning[1:] < crunning[:-1]
    return IncumbentTrace(
        ctimes[keep], crunning[keep], horizon=horizon, end_time=float(times[-1])
    )


def log_residual(gap: float, cfg: MetricConfig) -> float:
    """``ln(max(gap, floor))`` -- the floored log residual of a gap value."""
    if gap < 0.0:
        raise ValueError(f"gap must be >= 0, got {gap}")
    return math.log(max(gap, cfg.floor))


def _segment_durations(trace: IncumbentTrace, horizon: float) -> np.ndarray:
    """Durations each recorded value holds within [0, horizon].

    The final segment extends to the horizon; integrating to a horizon
    shorter than the trace span truncates it (points past the horizon get
    zero duration).
    """
    bounds = np.append(trace.times[1:], max(horizon, float(trace.times[-1])))
    upper = np.minimum(bounds, horizon)
    lower = np.minimum(trace.times, horizon)
    return np.maximum(upper - lower, 0.0)


def time_avg_log_residual(trace: IncumbentTrace, cfg: MetricConfig) -> float:
    """Exact Riemann sum of the floored log trace over [0, horizon], / horizon."""
    ell = np.log(np.maximum(trace.gaps, cfg.floor))
    durations = _segment_durations(trace, cfg.horizon)
    return float(np.dot(ell, durations) / cfg.horizon)


def _initial_ell(trace: IncumbentTrace, cfg: MetricConfig) -> float:
    if trace.initial_log_residual is not None:
        return trace.initial_log_residual
    return log_residual(float(trace.gaps[0]), cfg)


def decay_rate(trace: IncumbentTrace, cfg: MetricConfig) -> float:
    """Effective log-space decay slope of the run over [0, horizon].

    ``(2/T) * (ell_0 - J)`` where ``J`` is the time-averaged log residual:
    the constant slope of the linear log trajectory anchored at the initial
    residual whose time average matches the run. Non-negative for any valid
    incumbent trace; a run solved at construction (initial gap 0) scores 0.
    """
    if trace.solved_at_start:
        return 0.0
    ell0 = _initial_ell(trace, cfg)
    j = time_avg_log_residual(trace, cfg)
    return (2.0 / cfg.horizon) * (ell0 - j)


def terminal_log_residual(trace: IncumbentTrace, cfg: MetricConfig) -> float:
    """Floored log of the incumbent gap at the horizon."""
    return log_residual(trace.gap_at(min(cfg.horizon, float(trace.times[-1]))), cfg)


@dataclass(frozen=True)
class AltMetrics:
    """Simpler trajectory summaries used for metric comparisons."""

    terminal_time: float
    time_to_10pct: float
    linear_auc: float


def alt_metrics(trace: IncumbentTrace, cfg: MetricConfig) -> AltMetrics:
    """Run end time, earliest time the gap falls to 10% of its initial value
    (horizon when never reached), and the normalized linear-space area under
    the incumbent gap curve."""
    threshold = 0.1 * float(trace.gaps[0])
    hit = np.nonzero(trace.gaps <= threshold)[0]
    time_to = float(trace.times[hit[0]]) if hit.size else cfg.horizon
    durations = _segment_durations(trace, cfg.horizon)
    auc = float(np.dot(trace.gaps, durations) / cfg.horizon)
    return AltMetrics(terminal_time=trace.end_time, time_to_10pct=time_to, linear_auc=auc)


# ---------------------------------------------------------------------------
# Trace file format: {"horizon": .., "delta": .., "end_time": ..,
#                     "points": [{"t": .., "gap": ..}, ...]}
# Floats survive a JSON round trip bit-exactly (shortest-repr encoding).
# ---------------------------------------------------------------------------


def trace_to_json(trace: IncumbentTrace, cfg: MetricConfig) -> dict:
    obj = {
        "horizon": trace.horizon,
        "delta": cfg.floor,
        "end_time": trace.end_time,
        "points": [
            {"t": float(t), "gap": float(g)} for t, g in zip(trace.times, trace.gaps)
        ],
    }
    if trace.initial_log_residual is not None:
        obj["initial_log_residual"] = trace.initial_log_residual
    return obj


def trace_from_json(obj: dict) -> tuple[IncumbentTrace, MetricConfig]:
    try:
        points = obj["points"]
        trace = IncumbentTrace(
            [p["t"] for p in points],
            [p["gap"] for p in points],
            horizon=obj["horizon"],
            end_time=obj.get("end_time"),
            initial_log_residual=obj.get("initial_log_residual"),
        )
        cfg = MetricConfig(horizon=obj["horizon"], floor=obj["delta"])
    except KeyError as exc:
        raise ValueError(f"trace object missing required key: {exc}") from exc
    return trace, cfg


def save_trace(trace: IncumbentTrace, cfg: MetricConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(trace_to_json(trace, cfg), fh)


def load_trace(path) -> tuple[IncumbentTrace, MetricConfig]:
    with open(path, "r", encoding="utf-8") as fh:
        return trace_from_json(json.load(fh))
