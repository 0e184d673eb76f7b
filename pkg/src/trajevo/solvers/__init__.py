"""Parameterized metaheuristic backbones: guided/iterated local search for
TSP, ant colony for CVRP/MKP, greedy online assignment for BPP. Each run is
fully determined by a (mechanism, schedule) configuration and emits an
incumbent trace under a wall-clock or deterministic work-unit budget."""

from .aco import aco_step, greedy_cvrp, greedy_mkp, mkp_heuristic
from .clock import WallClock, WorkClock, make_clock
from .config import (
    AcoMechanism,
    GoaMechanism,
    GuidanceConfig,
    PerturbationConfig,
    ScheduleConfig,
    SolverConfig,
    TspMechanism,
    canonicalize,
    config_from_json,
    config_id,
    config_to_json,
    ils_config,
    seed_config,
    tsplib_specialist_config,
)
from .gls import edge_utilities, gls_guidance_update, knn_lists, nearest_neighbor_tour
from .goa import choose_bin
from .runner import RunResult, run_solver

__all__ = [
    "AcoMechanism",
    "GoaMechanism",
    "GuidanceConfig",
    "PerturbationConfig",
    "RunResult",
    "ScheduleConfig",
    "SolverConfig",
    "TspMechanism",
    "WallClock",
    "WorkClock",
    "aco_step",
    "canonicalize",
    "choose_bin",
    "config_from_json",
    "config_id",
    "config_to_json",
    "edge_utilities",
    "gls_guidance_update",
    "greedy_cvrp",
    "greedy_mkp",
    "ils_config",
    "knn_lists",
    "make_clock",
    "mkp_heuristic",
    "nearest_neighbor_tour",
    "run_solver",
    "seed_config",
    "tsplib_specialist_config",
]
