"""Command-line entry point: generation, evolution, evaluation, retrieval,
and oracle lookup as reproducible commands.

Exit codes: 0 success, 1 usage error, 2 data error, 3 provider failure.
Every file-producing command writes a manifest (command, resolved arguments,
master seed, tool version, timestamps) next to its outputs, and all
randomness flows from the master seed through one documented derivation
(command -> per-instance -> per-run), so re-running a manifest reproduces
instance files byte-identically and CSV gap columns exactly.
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import os
import sys
import time

import numpy as np

from . import __version__, library as libmod
from .evolution import RunConfig, derive_seed, run_evolution
from .mutation import LlmSettings, ProviderError, make_provider
from .problems import (
    UnsupportedFormatError,
    gap,
    generate,
    load_instance,
    oracle_optimum,
    reference_bound,
    reference_value,
    save_instance,
)
from .solvers import config_from_json, config_to_json, run_solver, seed_config
from .trajectory import MetricConfig, alt_metrics, decay_rate, save_trace

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PROVIDER = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1 (argparse defaults to 2)
        raise _UsageError(message)


def _manifest(command: str, resolved: dict, seed: int | None, started: float) -> dict:
    return {
        "command": command,
        "argv": sys.argv[1:],
        "resolved": resolved,
        "master_seed": seed,
        "tool_version": __version__,
        "started_at": started,
        "finished_at": time.time(),
    }


def _write_manifest(path: str, manifest: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_instances(spec: str):
    paths: list[str] = []
    if os.path.isdir(spec):
        for name in sorted(os.listdir(spec)):
            if name.endswith(".json") and name != "manifest.json" or name.endswith(".tsp"):
                paths.append(os.path.join(spec, name))
    else:
        paths = sorted(glob.glob(spec))
    if not paths:
        raise FileNotFoundError(f"no instance files match {spec!r}")
    return [load_instance(p) for p in paths]


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    started = time.time()
    os.makedirs(args.out, exist_ok=True)
    params: dict = {}
    if args.task in ("tsp", "cvrp", "mkp"):
        if args.n is None:
            raise _UsageError(f"--n is required for task {args.task}")
        params["n"] = args.n
    if args.task == "tsp":
        params["pattern"] = args.pattern
    if args.task == "mkp":
        params["d"] = args.constraints
    if args.task == "bpp":
        if args.items is None or args.capacity is None:
            raise _UsageError("--items and --capacity are required for task bpp")
        params["n_items"] = args.items
        params["capacity"] = args.capacity
    files = []
    for i in range(args.count):
        inst_seed = derive_seed(args.seed, "gen", args.task, i)
        inst = generate(args.task, seed=inst_seed, **params)
        if args.reference == "auto":
            try:
                ref, kind = oracle_optimum(inst), "oracle"
            except ValueError:
                ref, kind = reference_bound(inst), "bound"
            if hasattr(inst, "reference_optimum"):
                object.__setattr__(inst, "reference_optimum", float(ref))
                object.__setattr__(inst, "reference_kind", kind)
        path = os.path.join(args.out, f"{inst.name}.json")
        save_instance(inst, path)
        files.append(os.path.basename(path))
    resolved = {"task": args.task, "count": args.count, "params": params,
                "reference": args.reference, "files": files}
    _write_manifest(os.path.join(args.out, "manifest.json"),
                    _manifest("gen", resolved, args.seed, started))
    print(f"wrote {len(files)} {args.task} instances to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evolve
# ---------------------------------------------------------------------------


def _build_provider(kind: str, settings_obj: dict, audit_path: str | None):
    if kind == "stub":
        return make_provider("stub")
    settings = LlmSettings(
        base_url=settings_obj.get("base_url", ""),
        model=settings_obj.get("model", ""),
        temperature=float(settings_obj.get("temperature", 0.7)),
        api_key_env=settings_obj.get("api_key_env", "TRAJEVO_API_KEY"),
        timeout_s=float(settings_obj.get("timeout_s", 60.0)),
        max_retries=int(settings_obj.get("max_retries", 3)),
        max_inflight=int(settings_obj.get("max_inflight", 4)),
        audit_path=audit_path,
    )
    if not settings.base_url or not settings.model:
        raise ProviderError("llm provider requires base_url and model in provider_settings")
    if not os.environ.get(settings.api_key_env, ""):
        raise ProviderError(f"missing API key: set ${settings.api_key_env}")
    return make_provider("llm", settings)


def cmd_evolve(args) -> int:
    started = time.time()
    with open(args.config, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    run_cfg = RunConfig.from_json(obj)
    if args.seed is not None:
        run_cfg.master_seed = args.seed
    if args.horizon is not None:
        run_cfg.horizon_s = args.horizon
    if args.jobs is not None:
        run_cfg.jobs = args.jobs
    if args.provider is not None:
        run_cfg.provider = args.provider
    training = obj.get("training_dir")
    if args.instances:
        training = args.instances
    if not training:
        raise FileNotFoundError("no training instances: set training_dir or --instances")
    instances = _load_instances(training)
    os.makedirs(args.out, exist_ok=True)
    audit_path = os.path.join(args.out, "llm_audit.jsonl") if run_cfg.provider == "llm" else None
    provider = _build_provider(run_cfg.provider, run_cfg.provider_settings, audit_path)

    events_path = os.path.join(args.out, "events.jsonl")
    result = run_evolution(instances, run_cfg, provider=provider, events_path=events_path)

    failures = sum(1 for e in result.events if e["event"] == "provider_failure")
    proposals = sum(1 for e in result.events if e["event"] == "proposal")
    library = libmod.from_evolution(result)
    lib_path = os.path.join(args.out, "library.json")
    libmod.save(library, lib_path)
    resolved = {"run_config": run_cfg.to_json(), "training": training,
                "library": "library.json", "events": "events.jsonl",
                "provider_failures": failures, "proposals": proposals}
    _write_manifest(os.path.join(args.out, "manifest.json"),
                    _manifest("evolve", resolved, run_cfg.master_seed, started))
    best = result.population.best()
    print(f"evolved {run_cfg.iterations} iterations; population {len(result.population.entries)}; "
          f"best ell {best.ell if best.ell is not None else 'n/a'}; library -> {lib_path}")
    if failures and proposals == 0:
        print("provider produced no proposals", file=sys.stderr)
        return EXIT_PROVIDER
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

CSV_COLUMNS = [
    "instance", "gap_pct", "t_run", "decay_rate",
    "terminal_time", "time_to_10pct", "linear_auc",
]


def cmd_eval(args) -> int:
    started = time.time()
    if (args.library is None) == (args.solver_config is None):
        raise _UsageError("exactly one of --library or --solver-config is required")
    instances = _load_instances(args.instances)
    library = libmod.load(args.library) if args.library else None
    fixed_config = None
    if args.solver_config:
        with open(args.solver_config, "r", encoding="utf-8") as fh:
            fixed_config = config_from_json(json.load(fh))

    from dataclasses import replace as dc_replace

    rows = []
    trace_dir = None
    if args.traces:
        trace_dir = os.path.join(os.path.dirname(os.path.abspath(args.out)) or ".", "traces")
        os.makedirs(trace_dir, exist_ok=True)
    metric_cfg = MetricConfig(horizon=args.horizon)

    def eval_one(idx_inst):
        idx, inst = idx_inst
        config = fixed_config or libmod.retrieve(library, inst).config
        schedule = dc_replace(config.schedule,
                              time_limit_s=min(config.schedule.time_limit_s, args.horizon))
        config = dc_replace(config, schedule=schedule)
        f_star, _ = reference_value(inst)
        run_seed = derive_seed(args.seed, "eval", inst.name)
        result = run_solver(config, inst, f_star, args.horizon, run_seed, clock=args.clock)
        am = alt_metrics(result.trace, metric_cfg)
        row = {
            "instance": inst.name,
            "gap_pct": gap(result.solution.objective_value, f_star),
            "t_run": result.t_run,
            "decay_rate": decay_rate(result.trace, metric_cfg),
            "terminal_time": am.terminal_time,
            "time_to_10pct": am.time_to_10pct,
            "linear_auc": am.linear_auc,
        }
        if trace_dir:
            save_trace(result.trace, metric_cfg,
                       os.path.join(trace_dir, f"{inst.name}.trace.json"))
        return idx, row

    tasks = list(enumerate(instances))
    if args.jobs and args.jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            for idx, row in sorted(pool.map(eval_one, tasks)):
                rows.append(row)
    else:
        for item in tasks:
            rows.append(eval_one(item)[1])

    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    summary = {
        "instances": len(rows),
        "mean_gap_pct": float(np.mean([r["gap_pct"] for r in rows])),
        "mean_time_s": float(np.mean([r["t_run"] for r in rows])),
        "mean_decay_rate": float(np.mean([r["decay_rate"] for r in rows])),
    }
    summary_path = os.path.splitext(args.out)[0] + ".summary.json"
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(os.path.splitext(args.out)[0] + ".manifest.json",
                    _manifest("eval", {"instances": args.instances, "horizon": args.horizon,
                                       "library": args.library,
                                       "solver_config": args.solver_config,
                                       "clock": args.clock, "summary": summary},
                              args.seed, started))
    print(f"{len(rows)} instances | Gap (%) {summary['mean_gap_pct']:.3f} | "
          f"Time (s) {summary['mean_time_s']:.3f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# retrieve / oracle
# ---------------------------------------------------------------------------


def cmd_retrieve(args) -> int:
    library = libmod.load(args.library)
    inst = load_instance(args.instance)
    r = libmod.retrieve(library, inst)
    print(f"instance: {inst.name}")
    print(f"group: {r.group}")
    print("distances: " + " ".join(f"{d:.6f}" for d in r.distances))
    print(json.dumps(config_to_json(r.config), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_oracle(args) -> int:
    inst = load_instance(args.instance)
    value = oracle_optimum(inst)
    print(f"{inst.name}: {value}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="trajevo", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen", help="generate instance files")
    p.add_argument("--task", required=True, choices=["tsp", "cvrp", "bpp", "mkp"])
    p.add_argument("--n", type=int, help="instance size (tsp/cvrp/mkp)")
    p.add_argument("--items", type=int, help="item count (bpp)")
    p.add_argument("--capacity", type=int, help="bin capacity (bpp)")
    p.add_argument("--constraints", type=int, default=5, help="constraint count (mkp)")
    p.add_argument("--pattern", default="mixture",
                   help="tsp layout pattern or 'mixture'")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reference", choices=["auto", "none"], default="auto")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("evolve", help="run the evolution loop from a run config file")
    p.add_argument("--config", required=True, help="run configuration JSON")
    p.add_argument("--instances", help="training instance dir/glob (overrides config)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="override master seed")
    p.add_argument("--horizon", type=float, help="override horizon seconds")
    p.add_argument("--jobs", type=int, help="parallel runs inside batch evaluation")
    p.add_argument("--provider", choices=["stub", "llm"], help="override provider")
    p.set_defaults(fn=cmd_evolve)

    p = sub.add_parser("eval", help="evaluate a library or fixed config on instances")
    p.add_argument("--library", help="library.json for per-instance retrieval")
    p.add_argument("--solver-config", help="fixed solver configuration JSON")
    p.add_argument("--instances", required=True, help="instance dir or glob")
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--clock", choices=["wall", "work"], default="wall")
    p.add_argument("--traces", action="store_true", help="also write trace files")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("retrieve", help="print the warm-start config for an instance")
    p.add_argument("--library", required=True)
    p.add_argument("--instance", required=True)
    p.set_defaults(fn=cmd_retrieve)

    p = sub.add_parser("oracle", help="print the exact desk-scale reference value")
    p.add_argument("--instance", required=True)
    p.set_defaults(fn=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ProviderError as exc:
        print(f"provider failure: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (OSError, ValueError, LookupError, UnsupportedFormatError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
