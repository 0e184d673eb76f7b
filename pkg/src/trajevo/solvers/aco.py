"""Ant colony backbone for CVRP and MKP.

Ants build feasible solutions by roulette selection proportional to
pheromone^alpha * heuristic^beta; pheromone evaporates by (1 - rho) each
iteration and the iteration-best solution deposits (1/cost for CVRP,
normalized profit for MKP). A deterministic greedy construction provides the
shared initial incumbent.
"""

from __future__ import annotations

import numpy as np

from ..problems.cvrp import CvrpInstance, route_set_cost
from ..problems.mkp import MkpInstance
from .config import AcoMechanism, SolverConfig

PHEROMONE_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# CVRP construction
# ---------------------------------------------------------------------------


def _cvrp_heuristic(d: np.ndarray) -> np.ndarray:
    h = 1.0 / np.maximum(d, 1e-12)
    np.fill_diagonal(h, 0.0)
    return h


def greedy_cvrp(instance: CvrpInstance) -> list[list[int]]:
    """Deterministic nearest-feasible-neighbor construction (initial solver)."""
    d = instance.distance_matrix()
    demands = instance.demands
    unvisited = set(range(instance.n))
    routes: list[list[int]] = []
    while unvisited:
        load, cur = 0, 0
        route: list[int] = []
        while True:
            feas = [c for c in unvisited if demands[c] + load <= instance.capacity]
            if not feas:
                break
            nxt = min(feas, key=lambda c: (d[cur, c + 1], c))
            route.append(nxt)
            unvisited.discard(nxt)
            load += int(demands[nxt])
            cur = nxt + 1
        routes.append(route)
    return routes


def _construct_cvrp_ant(
    instance: CvrpInstance,
    d: np.ndarray,
    pheromone: np.ndarray,
    heuristic: np.ndarray,
    mech: AcoMechanism,
    rng: np.random.Generator,
    clock,
) -> tuple[list[list[int]], float]:
    n = instance.n
    demands = instance.demands
    unvisited = np.ones(n, dtype=bool)
    routes: list[list[int]] = []
    route: list[int] = []
    load, cur = 0, 0
    remaining = n
    while remaining:
        mask = unvisited & (demands + load <= instance.capacity)
        idx = np.nonzero(mask)[0]
        clock.tick(max(idx.size, 1))
        if idx.size == 0:
            routes.append(route)  # forced depot return
            route, load, cur = [], 0, 0
            continue
        tau = pheromone[cur, idx + 1] ** mech.alpha
        eta = heuristic[cur, idx + 1] ** mech.beta
        weights = tau * eta
        total = weights.sum()
        if not np.isfinite(total) or total <= 0.0:
            pick = int(idx[0])
        else:
            pick = int(rng.choice(idx, p=weights / total))
        route.append(pick)
        unvisited[pick] = False
        load += int(demands[pick])
        cur = pick + 1
        remaining -= 1
    if route:
        routes.append(route)
    return routes, route_set_cost(instance, routes, d)


# ---------------------------------------------------------------------------
# MKP construction
# ---------------------------------------------------------------------------


def mkp_heuristic(instance: MkpInstance) -> np.ndarray:
    """Profit per mean weighted consumption: p_i / mean_j(a_ij / b_j)."""
    consumption = (instance.weights / instance.capacities[:, None]).mean(axis=0)
    return instance.profits / np.maximum(consumption, 1e-12)


def greedy_mkp(instance: MkpInstance) -> np.ndarray:
    """Deterministic density-greedy selection (initial solver)."""
    order = np.argsort(-mkp_heuristic(instance), kind="stable")
    residual = instance.capacities.astype(np.int64).copy()
    selection = np.zeros(instance.n, dtype=np.int64)
    for i in order:
        w = instance.weights[:, i]
        if np.all(w <= residual):
            selection[i] = 1
            residual -= w
    return selection


def _construct_mkp_ant(
    instance: MkpInstance,
    pheromone: np.ndarray,
    eta: np.ndarray,
    mech: AcoMechanism,
    rng: np.random.Generator,
    clock,
) -> tuple[np.ndarray, int]:
    residual = instance.capacities.astype(np.int64).copy()
    selection = np.zeros(instance.n, dtype=np.int64)
    available = np.ones(instance.n, dtype=bool)
    while True:
        fits = available & np.all(instance.weights <= residual[:, None], axis=0)
        idx = np.nonzero(fits)[0]
        clock.tick(max(idx.size, 1))
        if idx.size == 0:
            break  # construction stops when nothing fits
        weights = pheromone[idx] ** mech.alpha * eta[idx] ** mech.beta
        total = weights.sum()
        if not np.isfinite(total) or total <= 0.0:
            pick = int(idx[0])
        else:
            pick = int(rng.choice(idx, p=weights / total))
        selection[pick] = 1
        available[pick] = False
        residual -= instance.weights[:, pick]
    profit = int(instance.profits[selection.astype(bool)].sum())
    return selection, profit


# ---------------------------------------------------------------------------
# one pheromone iteration (exposed for direct testing)
# ---------------------------------------------------------------------------


def aco_step(
    instance: CvrpInstance | MkpInstance,
    pheromone: np.ndarray,
    mech: AcoMechanism,
    rng: np.random.Generator,
    clock=None,
    _cache: dict | None = None,
) -> tuple[list, np.ndarray]:
    """Build ``n_ants`` feasible solutions and update pheromone in place:
    evaporation by (1 - rho), best-of-iteration deposit, floor at 1e-12.
    Returns (candidates, pheromone)."""
    if np.any(pheromone <= 0.0):
        raise ValueError("pheromone must be strictly positive")
    if clock is None:
        from .clock import WallClock

        clock = WallClock()
    cache = _cache if _cache is not None else {}
    candidates = []
    if isinstance(instance, CvrpInstance):
        d = cache.setdefault("d", instance.distance_matrix())
        heuristic = cache.setdefault("h", _cvrp_heuristic(d))
        for _ in range(mech.n_ants):
            routes, cost = _construct_cvrp_ant(instance, d, pheromone, heuristic, mech, rng, clock)
            candidates.append((routes, cost))
        best_routes, best_cost = min(candidates, key=lambda rc: rc[1])
        pheromone *= 1.0 - mech.rho
        deposit = 1.0 / max(best_cost, 1e-12)
        for route in best_routes:
            seq = [0] + [c + 1 for c in route] + [0]
            for a, b in zip(seq[:-1], seq[1:]):
                pheromone[a, b] += deposit
                pheromone[b, a] += deposit
    elif isinstance(instance, MkpInstance):
        eta = cache.setdefault("eta", mkp_heuristic(instance))
        total_profit = cache.setdefault("ptot", float(instance.profits.sum()))
        for _ in range(mech.n_ants):
            selection, profit = _construct_mkp_ant(instance, pheromone, eta, mech, rng, clock)
            candidates.append((selection, profit))
        best_sel, best_profit = max(candidates, key=lambda sp: sp[1])
        pheromone *= 1.0 - mech.rho
        pheromone[best_sel.astype(bool)] += best_profit / total_profit
    else:
        raise TypeError(f"ACO does not handle {type(instance)!r}")
    np.maximum(pheromone, PHEROMONE_FLOOR, out=pheromone)
    return candidates, pheromone


# ---------------------------------------------------------------------------
# full run
# ---------------------------------------------------------------------------


def run_aco(config: SolverConfig, instance: CvrpInstance | MkpInstance, f_star: float,
            horizon: float, seed: int, clock) -> dict:
    mech: AcoMechanism = config.mechanism
    sched = config.schedule
    rng = np.random.default_rng(seed)
    is_cvrp = isinstance(instance, CvrpInstance)

    clock.start()
    if is_cvrp:
        payload = greedy_cvrp(instance)
        cost = route_set_cost(instance, payload)
        pheromone = np.ones((instance.n + 1, instance.n + 1))
        clock.tick(instance.n * instance.n)
    else:
        payload = greedy_mkp(instance)
        cost = -float(instance.profits[payload.astype(bool)].sum())
        pheromone = np.ones(instance.n)
        clock.tick(instance.n)

    def rel_gap(c: float) -> float:
        g = (c - f_star) / abs(f_star)
        if g < -1e-9:
            raise ValueError(f"cost {c} beats the reference {f_star}; bad reference")
        return max(g, 0.0)

    best_payload, best_cost = payload, cost
    raw = [(0.0, rel_gap(best_cost))]
    phase_seconds = {"construction": 0.0, "deposit": 0.0}
    cache: dict = {}

    no_imp = 0
    stop_reason = "loop_max"
    for _ in range(sched.loop_max):
        if clock.now() >= sched.time_limit_s:
            stop_reason = "time"
            break
        if no_imp >= sched.max_no_improve:
            stop_reason = "stagnation"
            break
        t_phase = clock.now()
        candidates, pheromone = aco_step(instance, pheromone, mech, rng, clock, cache)
        phase_seconds["construction"] += clock.now() - t_phase
        if is_cvrp:
            routes, c = min(candidates, key=lambda rc: rc[1])
            cand_payload, cand_cost = routes, c
        else:
            sel, profit = max(candidates, key=lambda sp: sp[1])
            cand_payload, cand_cost = sel, -float(profit)
        if cand_cost < best_cost - 1e-12:
            best_payload, best_cost = cand_payload, cand_cost
            raw.append((clock.now(), rel_gap(best_cost)))
            no_imp = 0
        else:
            no_imp += 1

    t_end = clock.now()
    raw.append((t_end, rel_gap(best_cost)))
    if not is_cvrp:
        best_payload = np.asarray(best_payload).tolist()
    return {
        "raw": raw,
        "payload": best_payload,
        "objective": best_cost,
        "t_run": t_end,
        "phase_seconds": phase_seconds,
        "stop_reason": stop_reason,
    }
