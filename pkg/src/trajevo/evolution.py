"""Evolution loop: stratified batch evaluation, four layer steps with
tolerance-gated acceptance, a top-k population, and decoupled group archives.

Each iteration samples one batch per instance group, evaluates the selected
parent on the union batch, then chains the four layers (discover,
consolidate, compress, enhance); every layer proposes via the configured
provider, is evaluated on the same batch, and is accepted against its direct
parent by the layer's rule. Every evaluated candidate -- accepted or not --
is offered to every group archive using its per-group batch means, entirely
independent of population acceptance.

Parent-candidate comparisons are made at the parent's time cap; records
therefore keep raw traces and recompute batch means per comparison horizon.
An append-only JSONL event log captures every proposal, evaluation, and
decision; with the deterministic work clock two runs from the same master
seed differ only in the wall-clock ``ts`` fields.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .mutation import (
    Feedback,
    Layer,
    MutationRequest,
    ProviderError,
    StubProvider,
    check_layer_constraint,
)
from .problems import Instance, reference_value
from .profiles import GroupModel, extract_profile, fit_groups, nearest_group
from .solvers import RunResult, SolverConfig, config_id, config_to_json, run_solver, seed_config
from .trajectory import IncumbentTrace, MetricConfig, decay_rate, terminal_log_residual

K_DEGENERATE_FLOOR = 1e-9

LAYER_ORDER = (Layer.DISCOVER, Layer.CONSOLIDATE, Layer.COMPRESS, Layer.ENHANCE)


def derive_seed(master_seed: int, *tags) -> int:
    """Stable seed derivation: master seed plus a tag path."""
    blob = f"{master_seed}/" + "/".join(str(t) for t in tags)
    return int.from_bytes(hashlib.sha256(blob.encode()).digest()[:8], "big")


# ---------------------------------------------------------------------------
# tolerance and acceptance rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ToleranceParams:
    """epsilon: tolerance half-width (absolute for terminal log-residual,
    relative for decay rate and runtime); delta: improvement threshold
    (same dual convention)."""

    epsilon: float = 0.02
    delta: float = 0.05

    def __post_init__(self) -> None:
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be >= 0")
        if not (self.delta > 0.0):
            raise ValueError("delta must be > 0")


def within_tolerance(x_prime: float, x: float, kind: str, epsilon: float) -> bool:
    """Absolute tolerance for terminal log-residual ("ell"), relative for
    decay rate ("k") and runtime ("t"). A near-zero decay-rate baseline
    collapses the relative form; candidates count as within tolerance only
    if they are near zero too."""
    if kind == "ell":
        return abs(x_prime - x) <= epsilon
    if kind in ("k", "t"):
        if kind == "k" and abs(x) < K_DEGENERATE_FLOOR:
            return abs(x_prime) <= K_DEGENERATE_FLOOR
        return abs(x_prime - x) <= epsilon * abs(x)
    raise ValueError(f"unknown metric kind {kind!r}")


def _k_improved(k_prime: float, k: float, delta: float) -> bool:
    if abs(k) < K_DEGENERATE_FLOOR:
        return k_prime > 0.0
    return k_prime >= (1.0 + delta) * k


@dataclass(frozen=True)
class BatchMetrics:
    """Batch means: terminal log-residual, decay rate, runtime."""

    ell: float
    k: float
    t: float


def accept(layer: Layer, parent: BatchMetrics, cand: BatchMetrics, tol: ToleranceParams) -> bool:
    """Layer acceptance against the direct parent on the same batch.

    discover: terminal-quality improvement, ties broken by decay rate.
    consolidate: both terminal quality and decay rate within tolerance.
    compress: runtime improvement with terminal quality within tolerance.
    enhance: terminal-quality improvement with decay rate within tolerance.
    """
    eps, delta = tol.epsilon, tol.delta
    if layer is Layer.DISCOVER:
        return (cand.ell <= parent.ell - delta) or (
            within_tolerance(cand.ell, parent.ell, "ell", eps)
            and _k_improved(cand.k, parent.k, delta)
        )
    if layer is Layer.CONSOLIDATE:
        return within_tolerance(cand.ell, parent.ell, "ell", eps) and within_tolerance(
            cand.k, parent.k, "k", eps
        )
    if layer is Layer.COMPRESS:
        return cand.t <= (1.0 - delta) * parent.t and within_tolerance(
            cand.ell, parent.ell, "ell", eps
        )
    if layer is Layer.ENHANCE:
        return cand.ell <= parent.ell - delta and within_tolerance(
            cand.k, parent.k, "k", eps
        )
    raise ValueError(f"unknown layer {layer!r}")


# ---------------------------------------------------------------------------
# evaluation records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunRecord:
    instance_name: str
    group: int
    trace: IncumbentTrace
    t_run: float
    seed: int
    phase_seconds: dict


@dataclass
class EvalRecord:
    """All per-instance runs of one config on one union batch."""

    config: SolverConfig
    config_id: str
    runs: list[RunRecord]

    def metrics_at(self, horizon: float, floor: float = 1e-9) -> BatchMetrics:
        cfg = MetricConfig(horizon=horizon, floor=floor)
        ells = [terminal_log_residual(r.trace, cfg) for r in self.runs]
        ks = [decay_rate(r.trace, cfg) for r in self.runs]
        ts = [r.t_run for r in self.runs]
        return BatchMetrics(ell=float(np.mean(ells)), k=float(np.mean(ks)), t=float(np.mean(ts)))

    def group_metrics_at(self, horizon: float, floor: float = 1e-9) -> dict[int, BatchMetrics]:
        cfg = MetricConfig(horizon=horizon, floor=floor)
        groups: dict[int, list[RunRecord]] = {}
        for r in self.runs:
            groups.setdefault(r.group, []).append(r)
        out = {}
        for g, runs in sorted(groups.items()):
            out[g] = BatchMetrics(
                ell=float(np.mean([terminal_log_residual(r.trace, cfg) for r in runs])),
                k=float(np.mean([decay_rate(r.trace, cfg) for r in runs])),
                t=float(np.mean([r.t_run for r in runs])),
            )
        return out

    def mean_phase_shares(self) -> dict[str, float]:
        totals: dict[str, float] = {}
        for r in self.runs:
            span = max(sum(r.phase_seconds.values()), 1e-12)
            for name, seconds in r.phase_seconds.items():
                totals[name] = totals.get(name, 0.0) + seconds / span
        return {name: v / len(self.runs) for name, v in sorted(totals.items())}


class EvalContext:
    """Holds everything needed to evaluate a config on instances: reference
    values, the shared initial-residual cache, clock kind, and parallelism."""

    def __init__(self, references: dict[str, float], horizon: float, floor: float = 1e-9,
                 clock: str = "wall", jobs: int = 1) -> None:
        self.references = references
        self.horizon = horizon
        self.floor = floor
        self.clock = clock
        self.jobs = max(1, jobs)
        self.initial_gap: dict[str, float] = {}  # instance name -> gap at t=0
        self.initial_gap_hits = 0

    def pin_initial_residual(self, name: str, trace: IncumbentTrace) -> None:
        gap0 = float(trace.gaps[0])
        cached = self.initial_gap.get(name)
        if cached is None:
            self.initial_gap[name] = gap0
        else:
            self.initial_gap_hits += 1
            if cached != gap0:
                raise AssertionError(
                    f"initial construction for {name} is not deterministic: "
                    f"{cached} vs {gap0}"
                )
        trace.initial_log_residual = float(np.log(max(self.initial_gap[name], self.floor)))


def evaluate_batch(
    config: SolverConfig,
    batches: dict[int, list[Instance]],
    ctx: EvalContext,
    master_seed: int,
) -> EvalRecord:
    """Run ``config`` on every instance of the union batch with per-instance
    derived seeds. The per-instance initial residual is cached in ``ctx``
    across all evaluations on that instance."""
    cid = config_id(config)
    tasks = [(g, inst) for g, insts in sorted(batches.items()) for inst in insts]

    def one(item) -> RunRecord:
        g, inst = item
        seed = derive_seed(master_seed, "run", cid, inst.name)
        result: RunResult = run_solver(
            config, inst, ctx.references[inst.name], ctx.horizon, seed, clock=ctx.clock
        )
        return RunRecord(
            instance_name=inst.name,
            group=g,
            trace=result.trace,
            t_run=result.t_run,
            seed=seed,
            phase_seconds=result.phase_seconds,
        )

    if ctx.jobs > 1:
        with ThreadPoolExecutor(max_workers=ctx.jobs) as pool:
            runs = list(pool.map(one, tasks))
    else:
        runs = [one(item) for item in tasks]
    for r in runs:
        ctx.pin_initial_residual(r.instance_name, r.trace)
    return EvalRecord(config=config, config_id=cid, runs=runs)


# ---------------------------------------------------------------------------
# population and group archives
# ---------------------------------------------------------------------------


@dataclass
class PopulationEntry:
    config: SolverConfig
    config_id: str
    record: EvalRecord | None = None
    ell: float | None = None  # ranking key, refreshed on evaluation


class Population:
    """Top-k global configs ranked by batch-mean terminal log-residual."""

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError("population capacity must be >= 1")
        self.capacity = capacity
        self.entries: list[PopulationEntry] = []

    def find(self, cid: str) -> PopulationEntry | None:
        for e in self.entries:
            if e.config_id == cid:
                return e
        return None

    def refresh(self, cid: str, record: EvalRecord, ell: float) -> None:
        entry = self.find(cid)
        if entry is not None:
            entry.record = record
            entry.ell = ell

    def worst(self) -> PopulationEntry:
        return max(self.entries, key=lambda e: np.inf if e.ell is None else e.ell)

    def best(self) -> PopulationEntry:
        return min(self.entries, key=lambda e: np.inf if e.ell is None else e.ell)

    def insert(self, entry: PopulationEntry) -> str | None:
        """Insert an accepted config, evicting the worst when full.
        Returns the evicted config id, if any."""
        existing = self.find(entry.config_id)
        if existing is not None:
            existing.record, existing.ell = entry.record, entry.ell
            return None
        if len(self.entries) < self.capacity:
            self.entries.append(entry)
            return None
        victim = self.worst()
        self.entries.remove(victim)
        self.entries.append(entry)
        return victim.config_id

    def ranking(self) -> list[str]:
        return [
            e.config_id
            for e in sorted(self.entries, key=lambda e: np.inf if e.ell is None else e.ell)
        ]


@dataclass
class ArchiveEntry:
    config: SolverConfig
    config_id: str
    ell: float | None  # group-wise terminal log-residual (None for the seed)
    k: float | None
    t: float | None
    n_runs: int = 0

    def sort_key(self):
        if self.ell is None:
            return (np.inf, np.inf, np.inf)
        return (self.ell, -self.k, self.t)


class GroupArchive:
    """Top-K configs for one group, ranked by group-wise terminal
    log-residual (ties: higher decay rate, then lower runtime). Repeated
    offers of the same config keep its best stats."""

    def __init__(self, capacity: int) -> None:
        self.capacity = capacity
        self.by_id: dict[str, ArchiveEntry] = {}

    def offer(self, entry: ArchiveEntry) -> bool:
        cur = self.by_id.get(entry.config_id)
        if cur is None or entry.sort_key() < cur.sort_key():
            self.by_id[entry.config_id] = entry
        ranked = sorted(self.by_id.values(), key=lambda e: e.sort_key())
        self.by_id = {e.config_id: e for e in ranked[: self.capacity]}
        return entry.config_id in self.by_id

    def ranked(self) -> list[ArchiveEntry]:
        return sorted(self.by_id.values(), key=lambda e: e.sort_key())

    def best(self) -> ArchiveEntry:
        if not self.by_id:
            raise LookupError("archive is empty")
        return self.ranked()[0]


# ---------------------------------------------------------------------------
# run configuration and orchestrator
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    task: str
    iterations: int = 100
    groups: int = 10
    per_group: int = 3
    population_size: int = 5
    archive_size: int = 5
    epsilon: float = 0.02
    delta: float = 0.05
    horizon_s: float = 10.0
    master_seed: int = 0
    floor: float = 1e-9
    clock: str = "wall"
    jobs: int = 1
    provider: str = "stub"
    provider_settings: dict = field(default_factory=dict)
    seed_solver: SolverConfig | None = None

    def tolerance(self) -> ToleranceParams:
        return ToleranceParams(epsilon=self.epsilon, delta=self.delta)

    def to_json(self) -> dict:
        obj = {
            "task": self.task,
            "iterations": self.iterations,
            "groups": self.groups,
            "per_group": self.per_group,
            "population_size": self.population_size,
            "archive_size": self.archive_size,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "horizon_s": self.horizon_s,
            "master_seed": self.master_seed,
            "floor": self.floor,
            "clock": self.clock,
            "jobs": self.jobs,
            "provider": self.provider,
            "provider_settings": dict(self.provider_settings),
        }
        if self.seed_solver is not None:
            obj["seed_solver"] = config_to_json(self.seed_solver)
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        from .solvers import config_from_json

        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in obj.items() if k in known and k != "seed_solver"}
        seed_solver = obj.get("seed_solver")
        if seed_solver is not None:
            kwargs["seed_solver"] = config_from_json(seed_solver)
        return cls(**kwargs)


class EventLog:
    """Append-only in-memory event list, optionally mirrored to JSONL."""

    def __init__(self, path=None) -> None:
        self.events: list[dict] = []
        self._fh = open(path, "w", encoding="utf-8") if path else None

    def emit(self, event: dict) -> None:
        event = dict(event)
        event["ts"] = time.time()
        self.events.append(event)
        if self._fh:
            self._fh.write(json.dumps(event) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None


@dataclass
class EvolutionResult:
    run_config: RunConfig
    group_model: GroupModel
    population: Population
    archives: dict[int, GroupArchive]
    events: list[dict]
    seed_config_id: str
    references: dict[str, float]


def _metrics_obj(m: BatchMetrics) -> dict:
    return {"ell": m.ell, "k": m.k, "t": m.t}


def run_evolution(
    instances: list[Instance],
    run_cfg: RunConfig,
    provider=None,
    events_path=None,
) -> EvolutionResult:
    """Execute the full loop on a training pool. ``instances`` must all be of
    the run config's task; references are resolved up front (stored optimum,
    exact oracle, or certified bound)."""
    if not instances:
        raise ValueError("empty training pool")
    if any(inst.task != run_cfg.task for inst in instances):
        raise ValueError("training pool task does not match run config")
    names = [inst.name for inst in instances]
    if len(set(names)) != len(names):
        raise ValueError("instance names must be unique within the pool")
    provider = provider or StubProvider()
    log = EventLog(events_path)
    tol = run_cfg.tolerance()

    # group the pool
    profs = [extract_profile(inst) for inst in instances]
    model = fit_groups(profs, run_cfg.groups, seed=derive_seed(run_cfg.master_seed, "kmeans"))
    groups: dict[int, list[Instance]] = {g: [] for g in range(run_cfg.groups)}
    for inst, prof in zip(instances, profs):
        groups[nearest_group(prof, model)].append(inst)

    references = {inst.name: reference_value(inst)[0] for inst in instances}
    ctx = EvalContext(
        references,
        horizon=run_cfg.horizon_s,
        floor=run_cfg.floor,
        clock=run_cfg.clock,
        jobs=run_cfg.jobs,
    )

    seed_solver = run_cfg.seed_solver or seed_config(run_cfg.task, time_limit_s=run_cfg.horizon_s)
    seed_solver.validate()
    seed_id = config_id(seed_solver)

    population = Population(run_cfg.population_size)
    population.entries.append(PopulationEntry(config=seed_solver, config_id=seed_id))
    archives = {g: GroupArchive(run_cfg.archive_size) for g in range(run_cfg.groups)}
    for g in range(run_cfg.groups):
        archives[g].offer(ArchiveEntry(seed_solver, seed_id, None, None, None))

    log.emit({
        "event": "init",
        "run_config": run_cfg.to_json(),
        "seed_config_id": seed_id,
        "seed_config": config_to_json(seed_solver),
    })
    log.emit({
        "event": "grouping",
        "G": run_cfg.groups,
        "sizes": {g: len(members) for g, members in groups.items()},
    })

    def offer_to_archives(record: EvalRecord) -> None:
        per_group = record.group_metrics_at(run_cfg.horizon_s, run_cfg.floor)
        for g, m in per_group.items():
            archives[g].offer(
                ArchiveEntry(
                    config=record.config,
                    config_id=record.config_id,
                    ell=m.ell,
                    k=m.k,
                    t=m.t,
                    n_runs=sum(1 for r in record.runs if r.group == g),
                )
            )

    def log_evaluation(i: int, record: EvalRecord, reused: bool) -> None:
        log.emit({
            "event": "evaluation",
            "iter": i,
            "config_id": record.config_id,
            "config": config_to_json(record.config),
            "reused": reused,
            "metrics": _metrics_obj(record.metrics_at(run_cfg.horizon_s, run_cfg.floor)),
            "group_metrics": {
                str(g): _metrics_obj(m)
                for g, m in record.group_metrics_at(run_cfg.horizon_s, run_cfg.floor).items()
            },
        })

    for i in range(1, run_cfg.iterations + 1):
        rng_parent = np.random.default_rng(derive_seed(run_cfg.master_seed, "parent", i))
        parent_entry = population.entries[int(rng_parent.integers(0, len(population.entries)))]
        parent_cfg = parent_entry.config

        batch: dict[int, list[Instance]] = {}
        for g, members in groups.items():
            rng_b = np.random.default_rng(derive_seed(run_cfg.master_seed, "batch", i, g))
            if len(members) >= run_cfg.per_group:
                idx = rng_b.choice(len(members), size=run_cfg.per_group, replace=False)
            else:  # degenerate tiny group: pad by sampling with replacement
                idx = rng_b.choice(len(members), size=run_cfg.per_group, replace=True)
            batch[g] = [members[int(j)] for j in idx]
        log.emit({
            "event": "iteration",
            "iter": i,
            "parent_id": parent_entry.config_id,
            "batch": {str(g): [inst.name for inst in insts] for g, insts in batch.items()},
        })

        batch_seed = derive_seed(run_cfg.master_seed, "eval", i)
        parent_record = evaluate_batch(parent_cfg, batch, ctx, batch_seed)
        log_evaluation(i, parent_record, reused=False)
        offer_to_archives(parent_record)
        population.refresh(
            parent_entry.config_id,
            parent_record,
            parent_record.metrics_at(run_cfg.horizon_s, run_cfg.floor).ell,
        )

        current_cfg, current_record = parent_cfg, parent_record
        evaluated: dict[str, EvalRecord] = {parent_record.config_id: parent_record}

        for layer in LAYER_ORDER:
            t_cmp = current_cfg.schedule.time_limit_s
            pm = current_record.metrics_at(t_cmp, run_cfg.floor)
            feedback = Feedback(
                terminal_log_residual=pm.ell,
                decay_rate=pm.k,
                runtime=pm.t,
                phase_shares=current_record.mean_phase_shares(),
            )
            try:
                resp = provider.propose(
                    MutationRequest(
                        layer=layer,
                        parent=current_cfg,
                        feedback=feedback,
                        seed=derive_seed(run_cfg.master_seed, "mut", i, layer.value),
                    )
                )
            except ProviderError as exc:
                log.emit({"event": "provider_failure", "iter": i, "layer": layer.value,
                          "error": str(exc)})
                continue
            cand_cfg = resp.candidate
            # recheck the frozen half independently of the provider
            try:
                check_layer_constraint(layer, current_cfg, cand_cfg)
            except ValueError as exc:
                log.emit({"event": "provider_failure", "iter": i, "layer": layer.value,
                          "error": f"layer constraint violated: {exc}"})
                continue
            cand_id = config_id(cand_cfg)
            log.emit({
                "event": "proposal",
                "iter": i,
                "layer": layer.value,
                "parent_id": current_record.config_id,
                "candidate_id": cand_id,
                "candidate_config": config_to_json(cand_cfg),
                "provenance": resp.provenance,
            })
            if cand_id in evaluated:
                cand_record = evaluated[cand_id]
                log_evaluation(i, cand_record, reused=True)
            else:
                try:
                    cand_record = evaluate_batch(cand_cfg, batch, ctx, batch_seed)
                except Exception as exc:
                    log.emit({"event": "evaluation_failure", "iter": i, "layer": layer.value,
                              "config_id": cand_id, "error": str(exc)})
                    continue
                evaluated[cand_id] = cand_record
                log_evaluation(i, cand_record, reused=False)
                offer_to_archives(cand_record)
            cm = cand_record.metrics_at(t_cmp, run_cfg.floor)
            ok = accept(layer, pm, cm, tol)
            log.emit({
                "event": "decision",
                "iter": i,
                "layer": layer.value,
                "parent_id": current_record.config_id,
                "candidate_id": cand_id,
                "accepted": bool(ok),
                "parent_metrics": _metrics_obj(pm),
                "candidate_metrics": _metrics_obj(cm),
                "horizon": t_cmp,
                "epsilon": tol.epsilon,
                "delta": tol.delta,
            })
            if ok:
                current_cfg, current_record = cand_cfg, cand_record

        if current_record.config_id != parent_record.config_id:
            entry = PopulationEntry(
                config=current_cfg,
                config_id=current_record.config_id,
                record=current_record,
                ell=current_record.metrics_at(run_cfg.horizon_s, run_cfg.floor).ell,
            )
            evicted = population.insert(entry)
            log.emit({
                "event": "population",
                "iter": i,
                "action": "insert",
                "config_id": entry.config_id,
                "evicted": evicted,
                "ranking": population.ranking(),
            })
        else:
            log.emit({
                "event": "population",
                "iter": i,
                "action": "none",
                "config_id": parent_record.config_id,
                "evicted": None,
                "ranking": population.ranking(),
            })

    log.emit({
        "event": "final",
        "population": population.ranking(),
        "archive_sizes": {str(g): len(a.by_id) for g, a in archives.items()},
        "initial_residual_cache_hits": ctx.initial_gap_hits,
    })
    log.close()
    return EvolutionResult(
        run_config=run_cfg,
        group_model=model,
        population=population,
        archives=archives,
        events=log.events,
        seed_config_id=seed_id,
        references=references,
    )
