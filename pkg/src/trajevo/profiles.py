"""Instance profiles, z-score normalization, and k-means grouping.

A profile is a fixed-length real vector of cheap structural statistics, one
layout per task. Profiles are z-score normalized with statistics fit on a
training pool, clustered with k-means into G groups, and new instances are
assigned to the nearest group prototype in normalized space (plain Euclidean
distance). The geometric features are built from ratios and coefficients of
variation, so uniformly rescaling an instance's coordinates leaves them
unchanged.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .problems import BppInstance, CvrpInstance, Instance, MkpInstance, TspInstance

# pairwise distances are exact up to this size, sampled above it
EXACT_PAIR_LIMIT = 320
PAIR_SAMPLE_BUDGET = 50_000
_PAIR_SAMPLE_SEED = 0xC0FFEE  # fixed: profiles are pure functions of the instance

TSP_FEATURES = (
    "log_n",
    "pair_cv",
    "log_q90_q10",
    "density",
    "nn_cv",
    "anisotropy",
    "log_bbox_aspect",
    "radial_cv",
)
CVRP_FEATURES = TSP_FEATURES + ("tightness",)
BPP_FEATURES = ("log_items", "log_capacity", "mean_c", "std_c", "q10_c", "q50_c", "q90_c")
MKP_FEATURES = (
    "log_n",
    "log_d",
    "profit_mean",
    "profit_std",
    "weight_mean",
    "weight_std",
    "cap_ratio_mean",
    "cap_ratio_std",
)


@dataclass(frozen=True)
class InstanceProfile:
    task: str
    features: np.ndarray
    degenerate: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))
        if not np.all(np.isfinite(self.features)):
            raise ValueError("profile features must be finite")


def _cv(values: np.ndarray) -> float:
    mean = float(values.mean())
    if mean == 0.0:
        return 0.0
    return float(values.std() / mean)


def _geometry_features(points: np.ndarray) -> tuple[list[float], bool]:
    n = points.shape[0]
    if n > EXACT_PAIR_LIMIT:
        rng = np.random.default_rng(_PAIR_SAMPLE_SEED)
        i = rng.integers(0, n, size=PAIR_SAMPLE_BUDGET)
        j = rng.integers(0, n - 1, size=PAIR_SAMPLE_BUDGET)
        j = np.where(j >= i, j + 1, j)  # distinct pairs
        diffs = points[i] - points[j]
        pair = np.sqrt((diffs * diffs).sum(axis=1))
    else:
        diff = points[:, None, :] - points[None, :, :]
        d = np.sqrt((diff * diff).sum(axis=2))
        pair = d[np.triu_indices(n, k=1)]

    degenerate = bool(pair.mean() == 0.0)
    if degenerate:
        pair_cv = log_spread = density = nn_cv = 0.0
    else:
        pair_cv = _cv(pair)
        q10, q90 = np.quantile(pair, [0.1, 0.9])
        log_spread = math.log(q90 / q10) if q10 > 0.0 else 0.0
        nn = cKDTree(points).query(points, k=2)[0][:, 1]
        mu_nn = float(nn.mean())
        density = math.log(float(pair.mean()) / mu_nn) if mu_nn > 0.0 else 0.0
        nn_cv = _cv(nn) if mu_nn > 0.0 else 0.0

    centered = points - points.mean(axis=0)
    cov = np.cov(centered.T) if n > 1 else np.zeros((2, 2))
    eigs = np.sort(np.linalg.eigvalsh(cov))
    anisotropy = math.sqrt(eigs[1] / eigs[0]) if eigs[0] > 1e-18 else 0.0
    extent = points.max(axis=0) - points.min(axis=0)
    long_side, short_side = max(extent), min(extent)
    aspect = math.log(long_side / short_side) if short_side > 0.0 else 0.0
    radial = np.sqrt((centered * centered).sum(axis=1))
    radial_cv = _cv(radial)

    return [pair_cv, log_spread, density, nn_cv, anisotropy, aspect, radial_cv], degenerate


def extract_profile(instance: Instance) -> InstanceProfile:
    """Fixed-length profile vector; layouts per task are listed in the
    ``*_FEATURES`` tuples. Degenerate geometry (all points identical) zeroes
    the ratio features and sets the flag."""
    if isinstance(instance, TspInstance):
        geo, degenerate = _geometry_features(instance.coords)
        feats = [math.log(instance.n), *geo]
        return InstanceProfile("tsp", np.array(feats), degenerate)
    if isinstance(instance, CvrpInstance):
        geo, degenerate = _geometry_features(instance.all_points())
        tightness = float(instance.demands.sum()) / instance.capacity
        feats = [math.log(instance.n), *geo, tightness]
        return InstanceProfile("cvrp", np.array(feats), degenerate)
    if isinstance(instance, BppInstance):
        sizes = instance.items.astype(np.float64) / instance.capacity
        q10, q50, q90 = np.quantile(sizes, [0.1, 0.5, 0.9])
        feats = [
            math.log(instance.n_items),
            math.log(instance.capacity),
            float(sizes.mean()),
            float(sizes.std()),
            float(q10),
            float(q50),
            float(q90),
        ]
        return InstanceProfile("bpp", np.array(feats))
    if isinstance(instance, MkpInstance):
        ratios = instance.capacities / instance.weights.sum(axis=1)
        feats = [
            math.log(instance.n),
            math.log(instance.d),
            float(instance.profits.mean()),
            float(instance.profits.std()),
            float(instance.weights.mean()),
            float(instance.weights.std()),
            float(ratios.mean()),
            float(ratios.std()),
        ]
        return InstanceProfile("mkp", np.array(feats))
    raise TypeError(f"unknown instance type {type(instance)!r}")


# ---------------------------------------------------------------------------
# grouping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroupModel:
    """Fitted normalization plus G prototypes in normalized space."""

    task: str
    means: np.ndarray
    stds: np.ndarray
    prototypes: np.ndarray  # (G, p)

    def __post_init__(self) -> None:
        object.__setattr__(self, "means", np.asarray(self.means, dtype=np.float64))
        object.__setattr__(self, "stds", np.asarray(self.stds, dtype=np.float64))
        object.__setattr__(self, "prototypes", np.asarray(self.prototypes, dtype=np.float64))
        if self.prototypes.ndim != 2 or self.prototypes.shape[0] < 1:
            raise ValueError("need at least one prototype")
        if self.means.shape != self.stds.shape or self.means.ndim != 1:
            raise ValueError("normalization statistics must be 1-D and aligned")
        if self.prototypes.shape[1] != self.means.shape[0]:
            raise ValueError("prototype dimension does not match normalization")
        if np.any(self.stds <= 0.0):
            raise ValueError("stds must be positive (constant features are clamped to 1)")
        if not (np.all(np.isfinite(self.prototypes)) and np.all(np.isfinite(self.means))):
            raise ValueError("model parameters must be finite")

    @property
    def n_groups(self) -> int:
        return int(self.prototypes.shape[0])

    def normalize(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.means) / self.stds

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GroupModel):
            return NotImplemented
        return (
            self.task == other.task
            and np.array_equal(self.means, other.means)
            and np.array_equal(self.stds, other.stds)
            and np.array_equal(self.prototypes, other.prototypes)
        )


def zscore_fit(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    stds = np.where(stds > 0.0, stds, 1.0)  # constant features clamp to 1
    return means, stds


def _kmeanspp_init(X: np.ndarray, g: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((g, X.shape[1]))
    centers[0] = X[int(rng.integers(0, n))]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for i in range(1, g):
        total = d2.sum()
        if total <= 0.0:
            centers[i] = X[int(rng.integers(0, n))]
            continue
        probs = d2 / total
        centers[i] = X[int(rng.choice(n, p=probs))]
        d2 = np.minimum(d2, ((X - centers[i]) ** 2).sum(axis=1))
    return centers


def lloyd_kmeans(
    X: np.ndarray,
    g: int,
    seed: int,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Plain Lloyd iterations with k-means++ seeding.

    Returns (centroids, labels, per-iteration SSE history). Deterministic for
    a fixed seed; empty clusters are re-seeded from the point farthest from
    its assigned centroid.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < g:
        raise ValueError(f"need at least {g} profiles to form {g} groups")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp_init(X, g, rng)
    history: list[float] = []
    labels = np.zeros(X.shape[0], dtype=np.intp)
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        sse = float(d2[np.arange(X.shape[0]), labels].sum())
        history.append(sse)
        new_centers = centers.copy()
        for c in range(g):
            members = X[labels == c]
            if members.shape[0] == 0:
                farthest = int(np.argmax(d2[np.arange(X.shape[0]), labels]))
                new_centers[c] = X[farthest]
            else:
                new_centers[c] = members.mean(axis=0)
        move = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        if move <= tol:
            break
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    history.append(float(d2[np.arange(X.shape[0]), labels].sum()))
    return centers, labels, history


def fit_groups(profiles: Sequence[InstanceProfile], g: int, seed: int) -> GroupModel:
    """Fit z-score statistics and cluster the normalized profiles into g
    groups. Deterministic for fixed inputs and seed."""
    if not profiles:
        raise ValueError("no profiles given")
    task = profiles[0].task
    if any(p.task != task for p in profiles):
        raise ValueError("profiles mix tasks")
    if len(profiles) < g:
        raise ValueError(f"need at least {g} profiles to form {g} groups")
    X = np.vstack([p.features for p in profiles])
    means, stds = zscore_fit(X)
    Z = (X - means) / stds
    centers, _, _ = lloyd_kmeans(Z, g, seed=seed)
    return GroupModel(task=task, means=means, stds=stds, prototypes=centers)


def nearest_group(profile: InstanceProfile, model: GroupModel) -> int:
    """Index of the closest prototype in normalized space; ties break low."""
    if profile.task != model.task:
        raise ValueError(f"profile task {profile.task!r} does not match model {model.task!r}")
    z = model.normalize(profile.features)
    d2 = ((model.prototypes - z) ** 2).sum(axis=1)
    return int(np.argmin(d2))  # argmin returns the lowest index on ties


# ---------------------------------------------------------------------------
# persistence: {task, G, means[], stds[], prototypes[][]}
# ---------------------------------------------------------------------------


def model_to_json(model: GroupModel) -> dict:
    return {
        "task": model.task,
        "G": model.n_groups,
        "means": model.means.tolist(),
        "stds": model.stds.tolist(),
        "prototypes": model.prototypes.tolist(),
    }


def model_from_json(obj: dict) -> GroupModel:
    model = GroupModel(
        task=obj["task"],
        means=np.asarray(obj["means"]),
        stds=np.asarray(obj["stds"]),
        prototypes=np.asarray(obj["prototypes"]),
    )
    if model.n_groups != obj["G"]:
        raise ValueError(f"declared G={obj['G']} but found {model.n_groups} prototypes")
    return model


def save_model(model: GroupModel, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model), fh)


def load_model(path: str | os.PathLike) -> GroupModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_json(json.load(fh))
