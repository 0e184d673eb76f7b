import itertools
import math

import numpy as np
import pytest

from trajevo.evolution import (
    ArchiveEntry,
    BatchMetrics,
    EvalContext,
    GroupArchive,
    Population,
    PopulationEntry,
    RunConfig,
    ToleranceParams,
    accept,
    derive_seed,
    evaluate_batch,
    run_evolution,
    within_tolerance,
)
from trajevo.mutation import Layer, MutationRequest, MutationResponse, ProviderError, StubProvider
from trajevo.problems import tsp
from trajevo.solvers import ScheduleConfig, SolverConfig, TspMechanism, seed_config

TOL = ToleranceParams(epsilon=0.02, delta=0.05)


def smoke_seed_solver(time_limit=0.05):
    return SolverConfig(
        "gls",
        TspMechanism(),
        ScheduleConfig(time_limit_s=time_limit, loop_max=60, max_no_improve=12,
                       perturbation_period=4),
    )


def tiny_pool(count=12, n=10, base_seed=500):
    return [tsp.generate(n=n, seed=base_seed + i) for i in range(count)]


def smoke_config(**overrides):
    defaults = dict(
        task="tsp",
        iterations=2,
        groups=2,
        per_group=2,
        population_size=3,
        archive_size=2,
        horizon_s=0.05,
        master_seed=7,
        clock="work",
        seed_solver=smoke_seed_solver(),
    )
    defaults.update(overrides)
    return RunConfig(**defaults)


# ---------------------------------------------------------------------------
# tolerance and acceptance
# ---------------------------------------------------------------------------


def test_within_tolerance_examples():
    assert within_tolerance(-2.015, -2.00, "ell", 0.02)
    assert not within_tolerance(0.32, 0.30, "k", 0.02)  # 0.02 > 0.006
    for kind in ("ell", "k", "t"):
        assert within_tolerance(1.5, 1.5, kind, 0.02)
    with pytest.raises(ValueError):
        within_tolerance(1.0, 1.0, "cost", 0.1)


def test_within_tolerance_degenerate_k():
    assert within_tolerance(0.0, 0.0, "k", 0.02)
    assert within_tolerance(5e-10, 0.0, "k", 0.02)
    assert not within_tolerance(0.1, 0.0, "k", 0.02)


def test_accept_discover_examples():
    assert accept(Layer.DISCOVER, BatchMetrics(-2.00, 0.3, 1.0), BatchMetrics(-2.06, 0.1, 1.0), TOL)
    # tie-break: ell within tolerance, k improved by >= 5%
    assert accept(Layer.DISCOVER, BatchMetrics(-2.00, 0.30, 1.0), BatchMetrics(-1.995, 0.32, 1.0), TOL)
    assert not accept(Layer.DISCOVER, BatchMetrics(-2.00, 0.30, 1.0), BatchMetrics(-1.995, 0.31, 1.0), TOL)
    # degenerate baseline decay rate: any positive candidate counts as improved
    assert accept(Layer.DISCOVER, BatchMetrics(-2.00, 0.0, 1.0), BatchMetrics(-2.01, 0.001, 1.0), TOL)


def test_accept_compress_requires_strict_runtime_cut():
    parent = BatchMetrics(-2.0, 0.3, 10.0)
    assert not accept(Layer.COMPRESS, parent, BatchMetrics(-2.0, 0.3, 9.6), TOL)  # 9.6 > 9.5
    assert accept(Layer.COMPRESS, parent, BatchMetrics(-2.01, 0.3, 9.5), TOL)
    assert not accept(Layer.COMPRESS, parent, BatchMetrics(-2.5, 0.3, 9.5), TOL)  # ell left tolerance


def test_accept_enhance_and_consolidate():
    parent = BatchMetrics(-2.0, 0.30, 5.0)
    assert accept(Layer.ENHANCE, parent, BatchMetrics(-2.06, 0.301, 5.0), TOL)
    assert not accept(Layer.ENHANCE, parent, BatchMetrics(-2.06, 0.35, 5.0), TOL)  # k drifted
    assert not accept(Layer.ENHANCE, parent, BatchMetrics(-2.04, 0.30, 5.0), TOL)  # ell not improved
    assert accept(Layer.CONSOLIDATE, parent, BatchMetrics(-2.01, 0.303, 9.0), TOL)
    assert not accept(Layer.CONSOLIDATE, parent, BatchMetrics(-2.03, 0.30, 5.0), TOL)


def independent_rules(layer, p, c, eps, delta):
    """Re-implementation of the acceptance formulas, written from the rule
    definitions rather than the production code."""
    ell_tol = abs(c.ell - p.ell) <= eps
    if abs(p.k) < 1e-9:
        k_tol = abs(c.k) <= 1e-9
        k_imp = c.k > 0.0
    else:
        k_tol = abs(c.k - p.k) <= eps * abs(p.k)
        k_imp = c.k >= (1.0 + delta) * p.k
    if layer is Layer.DISCOVER:
        return (c.ell <= p.ell - delta) or (ell_tol and k_imp)
    if layer is Layer.CONSOLIDATE:
        return ell_tol and k_tol
    if layer is Layer.COMPRESS:
        return c.t <= (1.0 - delta) * p.t and ell_tol
    return (c.ell <= p.ell - delta) and k_tol


def test_acceptance_truth_table_grid():
    ells = [-2.0, -1.0]
    ell_primes = [-2.12, -2.05, -2.019, -2.0, -1.98, -1.9]
    ks = [0.0, 0.3]
    k_primes = [0.0, 0.295, 0.3, 0.306, 0.315, 0.36]
    ts = [10.0]
    t_primes = [9.4, 9.5, 9.55, 9.9, 10.0, 10.2]
    cases = 0
    for eps, delta in itertools.product([0.01, 0.02], [0.02, 0.05]):
        tol = ToleranceParams(epsilon=eps, delta=delta)
        for ell, ellp, k, kp, t, tp in itertools.product(ells, ell_primes, ks, k_primes, ts, t_primes):
            p, c = BatchMetrics(ell, k, t), BatchMetrics(ellp, kp, tp)
            for layer in Layer:
                assert accept(layer, p, c, tol) == independent_rules(layer, p, c, eps, delta)
                cases += 1
    assert cases >= 10_000


# ---------------------------------------------------------------------------
# evaluate_batch
# ---------------------------------------------------------------------------


def make_ctx(instances, horizon=0.05, jobs=1):
    refs = {i.name: tsp.held_karp(i) for i in instances}
    return EvalContext(refs, horizon=horizon, clock="work", jobs=jobs)


def test_evaluate_batch_run_count_and_means():
    pool = tiny_pool(count=20, n=8)
    batches = {g: pool[g * 2 : g * 2 + 2] for g in range(10)}  # 10 groups x 2
    ctx = make_ctx(pool)
    record = evaluate_batch(smoke_seed_solver(), batches, ctx, master_seed=1)
    assert len(record.runs) == 20
    m = record.metrics_at(0.05)
    ells = [np.log(max(r.trace.gaps[-1], 1e-9)) for r in record.runs]
    assert m.ell == pytest.approx(float(np.mean(ells)))
    per_group = record.group_metrics_at(0.05)
    assert set(per_group) == set(range(10))


def test_evaluate_batch_deterministic():
    pool = tiny_pool(count=4)
    batches = {0: pool[:2], 1: pool[2:]}
    ctx = make_ctx(pool)
    a = evaluate_batch(smoke_seed_solver(), batches, ctx, master_seed=3)
    b = evaluate_batch(smoke_seed_solver(), batches, ctx, master_seed=3)
    assert a.metrics_at(0.05) == b.metrics_at(0.05)


def test_initial_residual_cache_shared_across_configs():
    pool = tiny_pool(count=2)
    batches = {0: pool}
    ctx = make_ctx(pool)
    evaluate_batch(smoke_seed_solver(), batches, ctx, master_seed=1)
    assert ctx.initial_gap_hits == 0
    other = SolverConfig("gls", TspMechanism(knn_k=6), smoke_seed_solver().schedule)
    record = evaluate_batch(other, batches, ctx, master_seed=2)
    assert ctx.initial_gap_hits == 2  # same fixed construction, cache reused
    for r in record.runs:
        assert r.trace.initial_log_residual == pytest.approx(
            math.log(max(ctx.initial_gap[r.instance_name], 1e-9))
        )


def test_evaluate_batch_parallel_matches_serial():
    pool = tiny_pool(count=6)
    batches = {0: pool[:3], 1: pool[3:]}
    serial = evaluate_batch(smoke_seed_solver(), batches, make_ctx(pool, jobs=1), 5)
    parallel = evaluate_batch(smoke_seed_solver(), batches, make_ctx(pool, jobs=4), 5)
    assert serial.metrics_at(0.05) == parallel.metrics_at(0.05)


# ---------------------------------------------------------------------------
# population and archives
# ---------------------------------------------------------------------------


def entry(cid, ell):
    return PopulationEntry(config=seed_config("tsp"), config_id=cid, ell=ell)


def test_population_insert_and_eviction():
    pop = Population(capacity=2)
    pop.entries.append(entry("a", -1.0))
    assert pop.insert(entry("b", -2.0)) is None
    assert pop.insert(entry("c", -1.5)) == "a"  # worst evicted
    assert pop.ranking() == ["b", "c"]
    assert len(pop.entries) == 2
    assert pop.best().config_id == "b"


def archive_entry(cid, ell, k=0.5, t=1.0):
    return ArchiveEntry(seed_config("tsp"), cid, ell, k, t)


def test_archive_top_k_and_ties():
    a = GroupArchive(capacity=2)
    a.offer(archive_entry("s", None))  # seed placeholder ranks last
    a.offer(archive_entry("x", -1.0))
    a.offer(archive_entry("y", -2.0))
    a.offer(archive_entry("z", -1.5))
    assert [e.config_id for e in a.ranked()] == ["y", "z"]
    # tie on ell: higher decay rate wins, then lower runtime
    b = GroupArchive(capacity=2)
    b.offer(ArchiveEntry(seed_config("tsp"), "p", -1.0, 0.5, 2.0))
    b.offer(ArchiveEntry(seed_config("tsp"), "q", -1.0, 0.7, 3.0))
    b.offer(ArchiveEntry(seed_config("tsp"), "r", -1.0, 0.7, 1.0))
    assert [e.config_id for e in b.ranked()] == ["r", "q"]


def test_archive_dedupes_keeping_best_offer():
    a = GroupArchive(capacity=3)
    a.offer(archive_entry("x", -1.0))
    a.offer(archive_entry("x", -2.0))
    a.offer(archive_entry("x", -1.5))
    assert len(a.by_id) == 1
    assert a.best().ell == -2.0


# ---------------------------------------------------------------------------
# run_evolution
# ---------------------------------------------------------------------------


def test_zero_iterations_population_and_archives_hold_seed():
    pool = tiny_pool(count=6)
    result = run_evolution(pool, smoke_config(iterations=0))
    assert result.population.ranking() == [result.seed_config_id]
    for g, archive in result.archives.items():
        assert [e.config_id for e in archive.ranked()] == [result.seed_config_id]


def test_evolution_smoke_structure():
    pool = tiny_pool(count=12)
    cfg = smoke_config(iterations=3)
    result = run_evolution(pool, cfg)
    events = result.events
    kinds = [e["event"] for e in events]
    assert kinds[0] == "init" and kinds[1] == "grouping" and kinds[-1] == "final"
    iters = [e for e in events if e["event"] == "iteration"]
    assert len(iters) == 3
    # batches: per_group instances from each group
    for it in iters:
        assert set(it["batch"].keys()) == {"0", "1"}
        for names in it["batch"].values():
            assert len(names) == 2
    # layer order within an iteration
    proposals = [e for e in events if e["event"] == "proposal" and e["iter"] == 1]
    assert [p["layer"] for p in proposals] == ["discover", "consolidate", "compress", "enhance"]
    # population bound
    assert len(result.population.entries) <= cfg.population_size
    # every decision carries both metric sets and the tolerance constants
    for d in (e for e in events if e["event"] == "decision"):
        assert d["epsilon"] == cfg.epsilon and d["delta"] == cfg.delta
        assert set(d["parent_metrics"]) == {"ell", "k", "t"}


def test_evolution_determinism_modulo_ts():
    pool = tiny_pool(count=8)
    cfg = smoke_config(iterations=2, master_seed=42)
    a = run_evolution(pool, cfg)
    b = run_evolution(pool, cfg)

    def scrub(events):
        return [{k: v for k, v in e.items() if k != "ts"} for e in events]

    assert scrub(a.events) == scrub(b.events)


def test_rejected_candidate_still_offered_to_archives():
    pool = tiny_pool(count=6)

    class RejectableProvider(StubProvider):
        def propose(self, request):
            resp = super().propose(request)
            return resp

    result = run_evolution(pool, smoke_config(iterations=3), provider=RejectableProvider())
    rejected = {
        e["candidate_id"]
        for e in result.events
        if e["event"] == "decision" and not e["accepted"]
    }
    if rejected:  # archives may contain configs never accepted into the population
        archived = {cid for a in result.archives.values() for cid in a.by_id}
        pop = set(result.population.ranking())
        assert (rejected & archived) or all(cid in pop for cid in rejected) or True
        # at minimum: every evaluated candidate was offered; verify via replay
    # replay the log: archives must equal a fresh reconstruction
    replayed = {g: GroupArchive(result.run_config.archive_size) for g in result.archives}
    seed_cfg = result.run_config.seed_solver
    from trajevo.solvers import config_id as cid_of

    for g in replayed:
        replayed[g].offer(ArchiveEntry(seed_cfg, result.seed_config_id, None, None, None))
    for e in result.events:
        if e["event"] != "evaluation" or e["reused"]:
            continue
        for g_str, m in e["group_metrics"].items():
            replayed[int(g_str)].offer(
                ArchiveEntry(seed_cfg, e["config_id"], m["ell"], m["k"], m["t"])
            )
    for g, archive in result.archives.items():
        assert [x.config_id for x in archive.ranked()] == [
            x.config_id for x in replayed[g].ranked()
        ]


def test_provider_failure_skips_layer():
    pool = tiny_pool(count=6)

    class FlakyProvider(StubProvider):
        def propose(self, request):
            if request.layer is Layer.COMPRESS:
                raise ProviderError("endpoint down")
            return super().propose(request)

    result = run_evolution(pool, smoke_config(iterations=2), provider=FlakyProvider())
    failures = [e for e in result.events if e["event"] == "provider_failure"]
    assert len(failures) == 2
    assert all(f["layer"] == "compress" for f in failures)
    compress_decisions = [
        e for e in result.events if e["event"] == "decision" and e["layer"] == "compress"
    ]
    assert not compress_decisions


def test_layer_constraint_visible_in_event_log():
    pool = tiny_pool(count=8)
    result = run_evolution(pool, smoke_config(iterations=3))
    configs = {result.seed_config_id: result.run_config.seed_solver}
    from trajevo.solvers import config_to_json

    for e in result.events:
        if e["event"] == "evaluation":
            configs[e["config_id"]] = e["config"]
    for e in result.events:
        if e["event"] != "proposal":
            continue
        parent = configs[e["parent_id"]]
        parent_obj = parent if isinstance(parent, dict) else config_to_json(parent)
        cand_obj = e["candidate_config"]
        if e["layer"] in ("discover", "consolidate"):
            assert cand_obj["schedule"] == parent_obj["schedule"]
        else:
            assert cand_obj["mechanism"] == parent_obj["mechanism"]


def test_run_config_json_round_trip():
    cfg = smoke_config(iterations=5)
    obj = cfg.to_json()
    back = RunConfig.from_json(obj)
    assert back.to_json() == obj


def test_derive_seed_stable():
    assert derive_seed(1, "a", 2) == derive_seed(1, "a", 2)
    assert derive_seed(1, "a", 2) != derive_seed(1, "a", 3)
    assert derive_seed(2, "a", 2) != derive_seed(1, "a", 2)


def test_run_evolution_validates_pool():
    with pytest.raises(ValueError):
        run_evolution([], smoke_config())
    pool = tiny_pool(count=4)
    dup = pool + [pool[0]]
    with pytest.raises(ValueError):
        run_evolution(dup, smoke_config())
