"""Single-run driver: dispatch a configuration onto an instance and wrap the
outcome as an incumbent trace plus the final solution."""

from __future__ import annotations

from dataclasses import dataclass

from ..problems import (
    BppInstance,
    CvrpInstance,
    MkpInstance,
    Solution,
    TspInstance,
    evaluate,
)
from ..trajectory import IncumbentTrace, TracePoint, fold_incumbent
from .aco import run_aco
from .clock import make_clock
from .config import SolverConfig
from .gls import run_gls
from .goa import run_goa

_BACKBONE_TASKS = {
    "gls": ("tsp",),
    "aco": ("cvrp", "mkp"),
    "goa": ("bpp",),
}


@dataclass(frozen=True)
class RunResult:
    trace: IncumbentTrace
    solution: Solution
    t_run: float
    seed: int
    phase_seconds: dict
    stop_reason: str


def run_solver(
    config: SolverConfig,
    instance,
    f_star: float,
    horizon: float,
    seed: int,
    clock: str = "wall",
) -> RunResult:
    """Run ``config`` on ``instance`` against reference ``f_star``.

    The incumbent is recorded at t=0 (the fixed task-specific initial
    construction) and at every improvement; the trace horizon is
    ``max(horizon, t_run)`` so budget overshoot (at most one local-search
    pass) can never invalidate it. Deterministic payloads and gap sequences
    for fixed (config, instance, seed); trace times follow the clock.
    """
    config.validate()
    if instance.task not in _BACKBONE_TASKS[config.backbone]:
        raise ValueError(
            f"backbone {config.backbone!r} cannot solve task {instance.task!r}"
        )
    if not isinstance(instance, (TspInstance, CvrpInstance, BppInstance, MkpInstance)):
        raise TypeError(f"unknown instance type {type(instance)!r}")

    clk = make_clock(clock)
    if config.backbone == "gls":
        out = run_gls(config, instance, f_star, horizon, seed, clk)
    elif config.backbone == "aco":
        out = run_aco(config, instance, f_star, horizon, seed, clk)
    else:
        out = run_goa(config, instance, f_star, horizon, seed, clk)

    if not (out["objective"] == out["objective"]):  # NaN guard
        raise ValueError("solver produced a non-finite objective")

    check = evaluate(instance, out["payload"])
    if not check.feasible:
        raise AssertionError(f"solver returned an infeasible solution: {check.violation}")
    if isinstance(instance, (TspInstance, CvrpInstance)):
        if abs(check.objective - out["objective"]) > 1e-6 * max(1.0, abs(check.objective)):
            raise AssertionError(
                f"incremental objective {out['objective']} drifted from "
                f"recomputation {check.objective}"
            )

    raw = [TracePoint(t, g) for t, g in out["raw"]]
    trace = fold_incumbent(raw, horizon=max(horizon, out["t_run"]))
    solution = Solution(task=instance.task, payload=out["payload"], objective_value=check.objective)
    return RunResult(
        trace=trace,
        solution=solution,
        t_run=out["t_run"],
        seed=seed,
        phase_seconds=out["phase_seconds"],
        stop_reason=out["stop_reason"],
    )
