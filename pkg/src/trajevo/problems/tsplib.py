"""Read-only TSPLIB loader for EUC_2D node-coordinate instances.

Distances follow the benchmark convention (nearest-integer Euclidean); other
edge weight types (GEO, EXPLICIT, ATT, ...) are deliberately unsupported. A
sidecar file ``<stem>.opt`` holding a single number attaches the published
best-known tour length.
"""

from __future__ import annotations

import os

import numpy as np

from .base import UnsupportedFormatError
from .tsp import TspInstance


def parse_tsplib(text: str, best_known: float | None = None) -> TspInstance:
    header: dict[str, str] = {}
    lines = text.splitlines()
    coord_start = None
    for i, line in enumerate(lines):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.upper().startswith("NODE_COORD_SECTION"):
            coord_start = i + 1
            break
        if stripped.upper() in ("EOF",):
            break
        if ":" in stripped:
            key, _, value = stripped.partition(":")
            header[key.strip().upper()] = value.strip()
        else:
            # section keyword we do not handle before coordinates
            header[stripped.upper()] = ""

    problem_type = header.get("TYPE", "TSP").split()[0] if header.get("TYPE") else "TSP"
    if problem_type != "TSP":
        raise UnsupportedFormatError(f"unsupported problem type {problem_type!r}")
    ewt = header.get("EDGE_WEIGHT_TYPE", "")
    if ewt != "EUC_2D":
        raise UnsupportedFormatError(
            f"unsupported edge weight type {ewt or '<missing>'!r}; only EUC_2D is read"
        )
    if coord_start is None:
        raise UnsupportedFormatError("NODE_COORD_SECTION not found")
    try:
        dimension = int(header["DIMENSION"])
    except (KeyError, ValueError) as exc:
        raise UnsupportedFormatError("missing or malformed DIMENSION") from exc

    coords = np.zeros((dimension, 2), dtype=np.float64)
    seen = 0
    for line in lines[coord_start:]:
        stripped = line.strip()
        if not stripped or stripped.upper() == "EOF":
            break
        parts = stripped.split()
        if len(parts) < 3:
            raise UnsupportedFormatError(f"malformed coordinate line: {stripped!r}")
        idx = int(float(parts[0])) - 1
        if not 0 <= idx < dimension:
            raise UnsupportedFormatError(f"node id {idx + 1} outside 1..{dimension}")
        coords[idx] = (float(parts[1]), float(parts[2]))
        seen += 1
    if seen != dimension:
        raise UnsupportedFormatError(f"expected {dimension} coordinates, found {seen}")

    return TspInstance(
        coords=coords,
        reference_optimum=best_known,
        reference_kind="best_known" if best_known is not None else None,
        round_distances=True,
        name=header.get("NAME", "tsplib").split()[0] if header.get("NAME") else "tsplib",
    )


def load_tsplib(path: str | os.PathLike) -> TspInstance:
    path = os.fspath(path)
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    best_known = None
    sidecar = os.path.splitext(path)[0] + ".opt"
    if os.path.exists(sidecar):
        with open(sidecar, "r", encoding="utf-8") as fh:
            best_known = float(fh.read().strip().split()[0])
    return parse_tsplib(text, best_known=best_known)
