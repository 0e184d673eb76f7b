"""Shared evaluation plumbing for the four task families."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any


@dataclass(frozen=True)
class Evaluation:
    """Outcome of checking a candidate solution against an instance.

    Infeasible candidates carry a violation message and no objective value;
    they never get a fake objective.
    """

    feasible: bool
    objective: float | None = None
    violation: str | None = None


@dataclass(frozen=True)
class Solution:
    """Task-tagged solution payload with its recomputed objective value."""

    task: str
    payload: Any
    objective_value: float


def relative_gap(f: float, f_star: float) -> float:
    """Dimensionless relative gap (f - f*) / |f*|. Requires f* != 0."""
    if f_star == 0.0:
        raise ValueError("reference value must be nonzero for gap computation")
    return (f - f_star) / abs(f_star)


def gap(f: float, f_star: float) -> float:
    """Relative gap in percent: (f - f*) / |f*| * 100."""
    return relative_gap(f, f_star) * 100.0


class UnsupportedFormatError(ValueError):
    """Raised for instance formats the package deliberately does not read."""
