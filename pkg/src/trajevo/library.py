"""Persisted solver libraries and profile-based warm-start retrieval.

A library bundles the fitted group model, the per-group specialist archives,
the final global population, and run provenance. Retrieval for a new
instance is a pure lookup: profile it, normalize with the stored training
statistics, pick the nearest prototype, return that group's rank-1 config --
no provider calls, no solver runs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .evolution import ArchiveEntry, EvolutionResult, GroupArchive
from .problems import Instance
from .profiles import GroupModel, extract_profile, model_from_json, model_to_json, nearest_group
from .solvers import SolverConfig, config_from_json, config_to_json

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class LibraryEntry:
    config: SolverConfig
    config_id: str
    ell: float | None
    k: float | None
    t: float | None
    n_runs: int = 0


@dataclass
class SolverLibrary:
    task: str
    model: GroupModel
    archives: list[list[LibraryEntry]]  # one ranked list per group
    population: list[LibraryEntry]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.archives) != self.model.n_groups:
            raise ValueError(
                f"library has {len(self.archives)} archives for "
                f"{self.model.n_groups} groups"
            )
        for entries in self.archives:
            for e in entries:
                e.config.validate()
        for e in self.population:
            e.config.validate()

    @property
    def n_groups(self) -> int:
        return self.model.n_groups


def _entry_to_json(e: LibraryEntry) -> dict:
    return {
        "config": config_to_json(e.config),
        "config_id": e.config_id,
        "stats": None if e.ell is None else {"ell": e.ell, "k": e.k, "t": e.t},
        "n_runs": e.n_runs,
    }


def _entry_from_json(obj: dict) -> LibraryEntry:
    stats = obj.get("stats")
    return LibraryEntry(
        config=config_from_json(obj["config"]),
        config_id=obj["config_id"],
        ell=None if stats is None else stats["ell"],
        k=None if stats is None else stats["k"],
        t=None if stats is None else stats["t"],
        n_runs=int(obj.get("n_runs", 0)),
    )


def library_to_json(lib: SolverLibrary) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "task": lib.task,
        "model": model_to_json(lib.model),
        "archives": [[_entry_to_json(e) for e in entries] for entries in lib.archives],
        "population": [_entry_to_json(e) for e in lib.population],
        "provenance": lib.provenance,
    }


def library_from_json(obj: dict) -> SolverLibrary:
    version = obj.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(
            f"unsupported library schema version {version!r} (expected {SCHEMA_VERSION})"
        )
    return SolverLibrary(
        task=obj["task"],
        model=model_from_json(obj["model"]),
        archives=[[_entry_from_json(e) for e in entries] for entries in obj["archives"]],
        population=[_entry_from_json(e) for e in obj["population"]],
        provenance=obj.get("provenance", {}),
    )


def save(lib: SolverLibrary, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(library_to_json(lib), fh, sort_keys=True)
        fh.write("\n")


def load(path: str | os.PathLike) -> SolverLibrary:
    path = os.fspath(path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(
                f"{path}: corrupt library JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from exc
    return library_from_json(obj)


def from_evolution(result: EvolutionResult) -> SolverLibrary:
    """Package an evolution result for persistence and retrieval."""

    def from_archive(archive: GroupArchive) -> list[LibraryEntry]:
        return [
            LibraryEntry(
                config=e.config,
                config_id=e.config_id,
                ell=e.ell,
                k=e.k,
                t=e.t,
                n_runs=e.n_runs,
            )
            for e in archive.ranked()
        ]

    population = [
        LibraryEntry(
            config=e.config,
            config_id=e.config_id,
            ell=e.ell,
            k=None,
            t=None,
        )
        for e in result.population.entries
    ]
    run_json = result.run_config.to_json()
    return SolverLibrary(
        task=result.run_config.task,
        model=result.group_model,
        archives=[from_archive(result.archives[g]) for g in sorted(result.archives)],
        population=population,
        provenance={
            "run_config": run_json,
            "master_seed": result.run_config.master_seed,
            "iterations": result.run_config.iterations,
            "seed_config_id": result.seed_config_id,
        },
    )


@dataclass(frozen=True)
class Retrieval:
    group: int
    config: SolverConfig
    config_id: str
    distances: list[float]  # to every prototype, in group order


def retrieve(lib: SolverLibrary, instance: Instance) -> Retrieval:
    """Warm-start lookup: nearest prototype's rank-1 archived config."""
    if instance.task != lib.task:
        raise ValueError(f"instance task {instance.task!r} does not match library {lib.task!r}")
    profile = extract_profile(instance)
    g = nearest_group(profile, lib.model)
    z = lib.model.normalize(profile.features)
    distances = [float(((proto - z) ** 2).sum() ** 0.5) for proto in lib.model.prototypes]
    entries = lib.archives[g]
    if not entries:
        raise LookupError(
            f"archive for group {g} is empty; the library was not produced by a "
            "complete evolution run"
        )
    top = entries[0]
    return Retrieval(group=g, config=top.config, config_id=top.config_id, distances=distances)
