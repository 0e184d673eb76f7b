"""Freeze best-known references for the 20 seeded uniform TSP100 instances
used by the backbone baseline regression test.

Battery per instance: two long guided runs (different guidance flavors, 25 s
each, uncapped schedules) plus one or-opt run; the minimum is recorded.
References are optimum-side by construction of the comparison (any evaluated
run can at best match them), and each is sanity-checked against the
certified lower bound.
"""

from __future__ import annotations

import json
import pathlib
import time

from trajevo.problems import tsp
from trajevo.solvers import (
    GuidanceConfig,
    ScheduleConfig,
    SolverConfig,
    TspMechanism,
    run_solver,
)

UNCAP = dict(loop_max=10**6, max_no_improve=10**6)
OUT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "data" / "tsp100_refs.json"

BATTERY = [
    SolverConfig("gls", TspMechanism(knn_k=16, guidance=GuidanceConfig(True, 4, 1.2, 1.0, 0.5)),
                 ScheduleConfig(time_limit_s=25.0, **UNCAP)),
    SolverConfig("gls", TspMechanism(knn_k=12, guidance=GuidanceConfig(True, 1, 0.3, 1.0, 0.0)),
                 ScheduleConfig(time_limit_s=25.0, **UNCAP)),
    SolverConfig("gls", TspMechanism(knn_k=20, operator="or_opt",
                                     guidance=GuidanceConfig(True, 2, 0.3, 1.0, 0.0)),
                 ScheduleConfig(time_limit_s=10.0, **UNCAP)),
]


def main() -> None:
    refs = {}
    for i in range(20):
        inst = tsp.generate(n=100, seed=9000 + i, pattern="uniform")
        lb = tsp.lower_bound(inst)
        best = float("inf")
        t0 = time.time()
        for j, cfg in enumerate(BATTERY):
            res = run_solver(cfg, inst, lb, horizon=cfg.schedule.time_limit_s, seed=j)
            best = min(best, res.solution.objective_value)
        assert best >= lb
        refs[inst.name] = best
        print(f"{inst.name}: {best:.6f} ({time.time() - t0:.0f}s)", flush=True)
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(refs, indent=2, sort_keys=True) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
