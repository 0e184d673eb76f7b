"""Problem definitions: TSP, CVRP, online BPP, and MKP.

Each task exposes instance types, exact evaluation with feasibility verdicts,
seeded generators, desk-scale exact oracles, and certified reference bounds
usable as gap references when the true optimum is out of reach. The
free functions here dispatch on the instance type.
"""

from __future__ import annotations

from typing import Any

from . import bpp, cvrp, mkp, tsp
from .base import Evaluation, Solution, UnsupportedFormatError, gap, relative_gap
from .bpp import BppInstance
from .cvrp import CvrpInstance
from .io import (
    Instance,
    instance_from_json,
    instance_to_json,
    load_instance,
    save_instance,
)
from .mkp import MkpInstance
from .tsp import TspInstance
from .tsplib import load_tsplib, parse_tsplib

__all__ = [
    "Evaluation",
    "Solution",
    "UnsupportedFormatError",
    "Instance",
    "TspInstance",
    "CvrpInstance",
    "BppInstance",
    "MkpInstance",
    "gap",
    "relative_gap",
    "evaluate",
    "generate",
    "oracle_optimum",
    "reference_bound",
    "make_solution",
    "parse_tsplib",
    "load_tsplib",
    "load_instance",
    "save_instance",
    "instance_to_json",
    "instance_from_json",
]


def evaluate(instance: Instance, payload: Any) -> Evaluation:
    """Exact objective + feasibility verdict for a task-appropriate payload."""
    if isinstance(instance, TspInstance):
        return tsp.evaluate(instance, payload)
    if isinstance(instance, CvrpInstance):
        return cvrp.evaluate(instance, payload)
    if isinstance(instance, BppInstance):
        return bpp.evaluate(instance, payload)
    if isinstance(instance, MkpInstance):
        return mkp.evaluate(instance, payload)
    raise TypeError(f"unknown instance type {type(instance)!r}")


def make_solution(instance: Instance, payload: Any) -> Solution:
    """Validate a payload and wrap it with its recomputed objective."""
    ev = evaluate(instance, payload)
    if not ev.feasible:
        raise ValueError(f"infeasible solution: {ev.violation}")
    return Solution(task=instance.task, payload=payload, objective_value=ev.objective)


def generate(task: str, seed: int, **params) -> Instance:
    """Deterministic instance generation; see each task module for knobs."""
    if task == "tsp":
        return tsp.generate(seed=seed, **params)
    if task == "cvrp":
        return cvrp.generate(seed=seed, **params)
    if task == "bpp":
        return bpp.generate(seed=seed, **params)
    if task == "mkp":
        return mkp.generate(seed=seed, **params)
    raise ValueError(f"unknown task {task!r}")


def oracle_optimum(instance: Instance) -> float:
    """Exact reference value at desk scale; raises when the instance is too
    large for the task's oracle (BPP always returns its volume bound)."""
    if isinstance(instance, TspInstance):
        return tsp.held_karp(instance)
    if isinstance(instance, CvrpInstance):
        return cvrp.oracle_optimum(instance)
    if isinstance(instance, BppInstance):
        return float(bpp.lower_bound(instance))
    if isinstance(instance, MkpInstance):
        return mkp.oracle_optimum(instance)
    raise TypeError(f"unknown instance type {type(instance)!r}")


def reference_bound(instance: Instance) -> float:
    """Certified optimum-side bound usable as a gap reference at any scale
    (never on the wrong side of the optimum, so gaps stay non-negative)."""
    if isinstance(instance, TspInstance):
        return tsp.lower_bound(instance)
    if isinstance(instance, CvrpInstance):
        return cvrp.lower_bound(instance)
    if isinstance(instance, BppInstance):
        return float(bpp.lower_bound(instance))
    if isinstance(instance, MkpInstance):
        return mkp.reference_bound(instance)
    raise TypeError(f"unknown instance type {type(instance)!r}")


def reference_value(instance: Instance) -> tuple[float, str]:
    """Best available reference: stored value, exact oracle, or certified
    bound -- in that order. Returns (value, kind)."""
    stored = getattr(instance, "reference_optimum", None)
    if stored is not None:
        return float(stored), getattr(instance, "reference_kind", None) or "stored"
    try:
        return oracle_optimum(instance), "oracle"
    except ValueError:
        return reference_bound(instance), "bound"
