"""JSON instance files (one instance per file) and the TSPLIB bridge.

Files are written with sorted keys and fixed separators so identical
instances serialize byte-identically.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .bpp import BppInstance
from .cvrp import CvrpInstance
from .mkp import MkpInstance
from .tsp import TspInstance
from .tsplib import load_tsplib

Instance = TspInstance | CvrpInstance | BppInstance | MkpInstance


def instance_to_json(instance: Instance) -> dict:
    if isinstance(instance, TspInstance):
        obj = {
            "task": "tsp",
            "name": instance.name,
            "coords": instance.coords.tolist(),
            "round_distances": instance.round_distances,
            "reference_optimum": instance.reference_optimum,
            "reference_kind": instance.reference_kind,
        }
    elif isinstance(instance, CvrpInstance):
        obj = {
            "task": "cvrp",
            "name": instance.name,
            "depot": instance.depot.tolist(),
            "customers": instance.customers.tolist(),
            "demands": instance.demands.tolist(),
            "capacity": instance.capacity,
            "reference_optimum": instance.reference_optimum,
            "reference_kind": instance.reference_kind,
        }
    elif isinstance(instance, BppInstance):
        obj = {
            "task": "bpp",
            "name": instance.name,
            "items": instance.items.tolist(),
            "capacity": instance.capacity,
        }
    elif isinstance(instance, MkpInstance):
        obj = {
            "task": "mkp",
            "name": instance.name,
            "profits": instance.profits.tolist(),
            "weights": instance.weights.tolist(),
            "capacities": instance.capacities.tolist(),
            "reference_optimum": instance.reference_optimum,
            "reference_kind": instance.reference_kind,
        }
    else:
        raise TypeError(f"unknown instance type {type(instance)!r}")
    return obj


def instance_from_json(obj: dict) -> Instance:
    task = obj.get("task")
    if task == "tsp":
        return TspInstance(
            coords=np.asarray(obj["coords"], dtype=np.float64),
            reference_optimum=obj.get("reference_optimum"),
            reference_kind=obj.get("reference_kind"),
            round_distances=bool(obj.get("round_distances", False)),
            name=obj.get("name", "tsp"),
        )
    if task == "cvrp":
        return CvrpInstance(
            depot=np.asarray(obj["depot"], dtype=np.float64),
            customers=np.asarray(obj["customers"], dtype=np.float64),
            demands=np.asarray(obj["demands"], dtype=np.int64),
            capacity=int(obj["capacity"]),
            reference_optimum=obj.get("reference_optimum"),
            reference_kind=obj.get("reference_kind"),
            name=obj.get("name", "cvrp"),
        )
    if task == "bpp":
        return BppInstance(
            items=np.asarray(obj["items"], dtype=np.int64),
            capacity=int(obj["capacity"]),
            name=obj.get("name", "bpp"),
        )
    if task == "mkp":
        return MkpInstance(
            profits=np.asarray(obj["profits"], dtype=np.int64),
            weights=np.asarray(obj["weights"], dtype=np.int64),
            capacities=np.asarray(obj["capacities"], dtype=np.int64),
            reference_optimum=obj.get("reference_optimum"),
            reference_kind=obj.get("reference_kind"),
            name=obj.get("name", "mkp"),
        )
    raise ValueError(f"unknown or missing task tag {task!r}")


def save_instance(instance: Instance, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_json(instance), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_instance(path: str | os.PathLike) -> Instance:
    path = os.fspath(path)
    if path.endswith(".tsp"):
        return load_tsplib(path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid instance JSON at position {exc.pos}: {exc.msg}") from exc
    return instance_from_json(obj)
