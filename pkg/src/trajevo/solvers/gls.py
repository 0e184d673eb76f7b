"""Guided local search backbone for TSP (covers the ILS variant too).

The working tour descends on the augmented cost d_e + gls_lambda * mu * p_e
(mu = mean edge length of the initial tour, p = edge penalties) and is then
pulled to a true-cost local optimum so incumbent improvements are captured;
the incumbent moves under improve-only acceptance, so the recorded
trajectory is monotone by construction.

One schedule iteration is an improvement phase: it keeps alternating
guidance updates (or, with guidance disabled, kicks from the incumbent --
plain iterated local search) with descents until the incumbent improves or
the per-phase attempt cap runs out. ``max_no_improve`` therefore counts
consecutive failed phases, and ``loop_max`` caps the number of phases.

Candidate moves are restricted to k-nearest-neighbor pairs and evaluated in
batches (vectorized); "first" scanning takes the first improving candidate
in the fixed scan order (node index major, neighbor rank minor).
"""

from __future__ import annotations

import numpy as np

from ..problems.tsp import TspInstance
from .config import GuidanceConfig, SolverConfig, TspMechanism

EPS = 1e-12


def nearest_neighbor_tour(d: np.ndarray) -> np.ndarray:
    """Deterministic construction: start at node 0, always visit the nearest
    unvisited node (ties to the lowest index)."""
    n = d.shape[0]
    visited = np.zeros(n, dtype=bool)
    tour = np.empty(n, dtype=np.intp)
    tour[0] = 0
    visited[0] = True
    cur = 0
    for i in range(1, n):
        row = np.where(visited, np.inf, d[cur])
        nxt = int(np.argmin(row))
        tour[i] = nxt
        visited[nxt] = True
        cur = nxt
    return tour


def tour_cost(tour: np.ndarray, d: np.ndarray) -> float:
    return float(d[tour, np.roll(tour, -1)].sum())


def knn_lists(d: np.ndarray, k: int) -> np.ndarray:
    n = d.shape[0]
    k = min(k, n - 1)
    masked = d + np.diag(np.full(n, np.inf))
    return np.argsort(masked, axis=1, kind="stable")[:, :k]


def edge_utilities(
    tour: np.ndarray, d: np.ndarray, penalties: np.ndarray, lam: float, mu_edge: float
) -> np.ndarray:
    """Utility of each tour edge: d_e * (d_e/mu)^lam / (1 + p_e)."""
    u, v = tour, np.roll(tour, -1)
    d_e = d[u, v]
    p_e = penalties[u, v]
    emphasis = (d_e / mu_edge) ** lam if lam != 0.0 else 1.0
    return d_e * emphasis / (1.0 + p_e)


def gls_guidance_update(
    tour: np.ndarray,
    d: np.ndarray,
    penalties: np.ndarray,
    guidance: GuidanceConfig,
    mu_edge: float,
) -> list[tuple[int, int]]:
    """Penalize the top-k highest-utility tour edges in place; returns the
    selected edges. Penalties are kept symmetric."""
    util = edge_utilities(tour, d, penalties, guidance.lam, mu_edge)
    k = min(guidance.top_k, util.size)
    top = np.argpartition(util, -k)[-k:]
    u, v = tour, np.roll(tour, -1)
    selected = []
    for idx in top:
        a, b = int(u[idx]), int(v[idx])
        penalties[a, b] += guidance.weight
        penalties[b, a] += guidance.weight
        selected.append((a, b))
    return selected


class _GlsState:
    """Mutable run state shared by the move routines."""

    __slots__ = (
        "tour", "pos", "cost", "best_tour", "best_cost", "d", "aug", "knn",
        "penalties", "mu_edge", "lam_mu", "pair_u", "pair_v",
        "active_aug", "active_true",
    )

    def __init__(self, d: np.ndarray, tour: np.ndarray, knn: np.ndarray, guided: bool,
                 gls_lambda: float) -> None:
        n = d.shape[0]
        self.d = d
        self.tour = np.asarray(tour, dtype=np.intp)
        self.pos = np.empty(n, dtype=np.intp)
        self.pos[self.tour] = np.arange(n)
        self.cost = tour_cost(self.tour, d)
        self.best_tour = self.tour.copy()
        self.best_cost = self.cost
        self.knn = knn
        self.mu_edge = self.cost / n
        self.lam_mu = gls_lambda * self.mu_edge
        self.penalties = np.zeros_like(d) if guided else None
        self.aug = d.copy() if guided else d
        # static near-pair node arrays for candidate generation
        k = knn.shape[1]
        self.pair_u = np.repeat(np.arange(n, dtype=np.intp), k)
        self.pair_v = knn.reshape(-1)
        # don't-look bits, kept separately for the two cost surfaces
        self.active_aug = np.ones(n, dtype=bool)
        self.active_true = np.ones(n, dtype=bool)

    def activate(self, nodes) -> None:
        self.active_aug[nodes] = True
        self.active_true[nodes] = True

    def activate_all(self) -> None:
        self.active_aug[:] = True
        self.active_true[:] = True

    def apply_penalties(self, edges: list[tuple[int, int]], weight: float) -> None:
        for a, b in edges:
            bump = self.lam_mu * weight
            self.aug[a, b] += bump
            self.aug[b, a] += bump
            self.active_aug[a] = True
            self.active_aug[b] = True

    def reset_to_best(self) -> None:
        self.tour = self.best_tour.copy()
        self.pos[self.tour] = np.arange(self.tour.size)
        self.cost = self.best_cost
        self.activate_all()


def _two_opt_candidates(state: _GlsState, matrix: np.ndarray, nodes: np.ndarray):
    """Candidate arrays (pu, pv, delta) for knn-restricted 2-opt moves whose
    near pair starts at one of ``nodes``; pu/pv are node identities (the
    shifted second half targets the move making (u, v) the second new edge).

    A move on positions (i, j) creates edges (t[i], t[j]) and
    (t[i+1], t[j+1]); for each near pair (u, v) both the move making (u, v)
    the first new edge and the shifted move making it the second are
    scanned, so any improving move creating at least one short edge is
    reachable.
    """
    n = state.d.shape[0]
    k = state.knn.shape[1]
    if nodes.size == n:
        pu, pv = state.pair_u, state.pair_v
    else:
        pu = np.repeat(nodes, k)
        pv = state.knn[nodes].reshape(-1)
    I0 = state.pos[pu]
    J0 = state.pos[pv]
    I = np.concatenate([I0, (I0 - 1) % n])
    J = np.concatenate([J0, (J0 - 1) % n])
    lo = np.minimum(I, J)
    hi = np.maximum(I, J)
    t = state.tour
    a, b = t[lo], t[(lo + 1) % n]
    c, e = t[hi], t[(hi + 1) % n]
    delta = matrix[a, c] + matrix[b, e] - matrix[a, b] - matrix[c, e]
    invalid = (hi - lo < 2) | ((lo == 0) & (hi == n - 1))
    delta[invalid] = np.inf
    return np.concatenate([pu, pu]), np.concatenate([pv, pv]), delta


def _move_positions(state: _GlsState, u: int, v: int, shifted: bool) -> tuple[int, int]:
    """Current (i, j) position pair of the move identified by near pair
    (u, v); returns (-1, -1) when the move is degenerate right now."""
    n = state.tour.size
    i, j = int(state.pos[u]), int(state.pos[v])
    if shifted:
        i, j = (i - 1) % n, (j - 1) % n
    if i > j:
        i, j = j, i
    if j - i < 2 or (i == 0 and j == n - 1):
        return -1, -1
    return i, j


def _apply_two_opt(state: _GlsState, i: int, j: int, clock=None) -> float:
    """Reverse tour[i+1..j]; returns the true-cost delta."""
    t = state.tour
    n = t.size
    a, b, c, e = t[i], t[(i + 1) % n], t[j], t[(j + 1) % n]
    true_delta = state.d[a, c] + state.d[b, e] - state.d[a, b] - state.d[c, e]
    t[i + 1 : j + 1] = t[i + 1 : j + 1][::-1]
    state.pos[t[i + 1 : j + 1]] = np.arange(i + 1, j + 1)
    state.cost += float(true_delta)
    if clock is not None:
        clock.tick(j - i + 1)  # reversal work; also orders same-scan improvements
    return float(true_delta)


def _or_opt_candidates(state: _GlsState, seg_len: int, matrix: np.ndarray):
    """Relocation of a length-``seg_len`` segment to follow a near neighbor
    of its first node (forward orientation). Returns (s, anchor_pos, delta)."""
    n = state.d.shape[0]
    t, pos = state.tour, state.pos
    k = state.knn.shape[1]
    starts = np.arange(1, n - seg_len + 1)  # segment start positions
    v = state.knn[t[starts]].reshape(-1)  # insertion anchor nodes (k per start)
    s = np.repeat(starts, k)
    first = t[s]
    last = t[s + seg_len - 1]
    prev = t[s - 1]
    nxt = t[(s + seg_len) % n]
    vpos = pos[v]
    # exclude anchors inside or adjacent to the segment
    bad = (vpos >= s - 1) & (vpos <= s + seg_len - 1)
    succ_v = t[(vpos + 1) % n]
    remove = matrix[prev, nxt] - matrix[prev, first] - matrix[last, nxt]
    insert = matrix[v, first] + matrix[last, succ_v] - matrix[v, succ_v]
    delta = np.where(bad, np.inf, remove + insert)
    return s, vpos, delta


def _apply_or_opt(state: _GlsState, s: int, vpos: int, seg_len: int) -> float:
    t = state.tour
    n = t.size
    seg = t[s : s + seg_len].copy()
    first, last = seg[0], seg[-1]
    prev, nxt = t[s - 1], t[(s + seg_len) % n]
    v = t[vpos]
    succ_v = t[(vpos + 1) % n]
    true_delta = (
        state.d[prev, nxt] - state.d[prev, first] - state.d[last, nxt]
        + state.d[v, first] + state.d[last, succ_v] - state.d[v, succ_v]
    )
    rest = np.concatenate([t[:s], t[s + seg_len :]])
    at = int(np.nonzero(rest == v)[0][0]) + 1
    state.tour = np.concatenate([rest[:at], seg, rest[at:]])
    state.pos[state.tour] = np.arange(n)
    state.cost += float(true_delta)
    return float(true_delta)


class _Budget:
    """Shared deadline/move bookkeeping for one run."""

    __slots__ = ("clock", "deadline", "moves", "move_cap")

    def __init__(self, clock, deadline: float, move_cap: int) -> None:
        self.clock = clock
        self.deadline = deadline
        self.moves = 0
        self.move_cap = move_cap

    def exhausted(self) -> bool:
        return self.clock.now() >= self.deadline or self.moves >= self.move_cap


def _capture(state: _GlsState, on_improve) -> None:
    if state.cost < state.best_cost - EPS:
        state.best_cost = state.cost
        state.best_tour = state.tour.copy()
        on_improve()


def _descend_two_opt(state: _GlsState, mech: TspMechanism, matrix: np.ndarray,
                     budget: _Budget, on_improve) -> None:
    """First/best-improvement 2-opt descent on ``matrix`` with don't-look
    bits: only candidates anchored at active nodes are scanned, and each
    scan greedily applies every candidate that is still improving when its
    turn comes (deltas are recomputed at apply time, so stale candidates are
    skipped). Applying a move reactivates its endpoints; a scan with no
    improving candidate deactivates the scanned nodes."""
    active = state.active_aug if matrix is state.aug else state.active_true
    n = state.tour.size
    while not budget.exhausted():
        nodes = np.flatnonzero(active)
        if nodes.size == 0:
            break
        pu, pv, delta = _two_opt_candidates(state, matrix, nodes)
        budget.clock.tick(max(delta.size, nodes.size))
        hits = np.nonzero(delta < -EPS)[0]
        if hits.size == 0:
            active[nodes] = False
            continue
        if mech.scan == "best":
            hits = hits[np.argsort(delta[hits], kind="stable")]
        applied = False
        cand_half = delta.size // 2
        for m in hits:
            u, v = int(pu[m]), int(pv[m])
            i, j = _move_positions(state, u, v, shifted=m >= cand_half)
            if i < 0:
                continue
            t = state.tour
            a, b, c, e = t[i], t[(i + 1) % n], t[j], t[(j + 1) % n]
            if matrix[a, c] + matrix[b, e] - matrix[a, b] - matrix[c, e] >= -EPS:
                continue
            _apply_two_opt(state, i, j, budget.clock)
            state.activate([int(a), int(b), int(c), int(e)])
            applied = True
            budget.moves += 1
            _capture(state, on_improve)
            if budget.exhausted():
                break
        budget.clock.tick(hits.size)
        if not applied:
            active[nodes] = False


def _descend_or_opt(state: _GlsState, mech: TspMechanism, matrix: np.ndarray,
                    budget: _Budget, on_improve) -> None:
    """Segment-relocation descent (lengths 1..3); full scans each round."""
    while not budget.exhausted():
        choice = None
        best_delta = -EPS
        for seg_len in (1, 2, 3):
            s, vpos, delta = _or_opt_candidates(state, seg_len, matrix)
            budget.clock.tick(delta.size)
            if not delta.size:
                continue
            if mech.scan == "first":
                hits = np.nonzero(delta < -EPS)[0]
                if hits.size:
                    m = int(hits[0])
                    choice = (int(s[m]), int(vpos[m]), seg_len)
                    break
            else:
                m = int(np.argmin(delta))
                if delta[m] < best_delta:
                    best_delta = float(delta[m])
                    choice = (int(s[m]), int(vpos[m]), seg_len)
        if choice is None:
            break
        _apply_or_opt(state, *choice)
        budget.clock.tick(state.tour.size)  # splice work; orders improvements
        budget.moves += 1
        _capture(state, on_improve)


def _descend(state: _GlsState, mech: TspMechanism, matrix: np.ndarray, budget: _Budget,
             on_improve) -> None:
    if mech.operator == "2opt":
        _descend_two_opt(state, mech, matrix, budget, on_improve)
    else:
        _descend_or_opt(state, mech, matrix, budget, on_improve)


def _double_descent(state: _GlsState, mech: TspMechanism, budget: _Budget, on_improve) -> None:
    """Augmented descent, then a true-cost descent so the working tour ends
    at a true local optimum and incumbent improvements are never missed."""
    _descend(state, mech, state.aug, budget, on_improve)
    if state.aug is not state.d:
        _descend(state, mech, state.d, budget, on_improve)


def _kick(state: _GlsState, mech: TspMechanism, rng: np.random.Generator, clock) -> None:
    n = state.tour.size
    operator = mech.perturbation.operator
    for _ in range(mech.perturbation.kick_strength):
        if operator == "2opt_kick":
            i, j = sorted(int(x) for x in rng.integers(0, n, size=2))
            if j - i >= 1:
                state.tour[i + 1 : j + 1] = state.tour[i + 1 : j + 1][::-1]
        else:  # double_bridge
            cuts = np.sort(rng.integers(1, n, size=3))
            a, b, c = (int(x) for x in cuts)
            if a < b < c:
                t = state.tour
                state.tour = np.concatenate([t[:a], t[b:c], t[a:b], t[c:]])
    state.pos[state.tour] = np.arange(n)
    state.cost = tour_cost(state.tour, state.d)
    state.activate_all()
    clock.tick(n)


# attempts per improvement phase: how many guidance updates (or kicks, for
# the unguided variant) a phase may spend chasing one incumbent improvement
PHASE_ATTEMPTS = 25


def run_gls(config: SolverConfig, instance: TspInstance, f_star: float,
            horizon: float, seed: int, clock) -> dict:
    """Execute one GLS/ILS run; returns raw trace points and the final tour.

    Stop conditions are checked at phase heads: time cap, loop_max phases,
    or max_no_improve consecutive failed phases.
    """
    mech: TspMechanism = config.mechanism
    sched = config.schedule
    rng = np.random.default_rng(seed)
    d = instance.distance_matrix()
    n = instance.n

    clock.start()
    tour = nearest_neighbor_tour(d)
    clock.tick(n * n)
    knn = knn_lists(d, mech.knn_k)
    guided = mech.guidance.enabled
    state = _GlsState(d, tour, knn, guided, mech.guidance.gls_lambda)

    def rel_gap(cost: float) -> float:
        g = (cost - f_star) / abs(f_star)
        if g < -1e-9:
            raise ValueError(
                f"solution cost {cost} beats the reference {f_star}; bad reference"
            )
        return max(g, 0.0)

    raw: list[tuple[float, float]] = [(0.0, rel_gap(state.best_cost))]
    phase_seconds = {"local_search": 0.0, "guidance": 0.0, "perturbation": 0.0}

    def record_improvement() -> None:
        raw.append((clock.now(), rel_gap(state.best_cost)))

    improved_flag = [False]

    def on_improve() -> None:
        improved_flag[0] = True
        record_improvement()

    def guidance_step() -> None:
        t0 = clock.now()
        edges = gls_guidance_update(state.tour, d, state.penalties, mech.guidance,
                                    state.mu_edge)
        state.apply_penalties(edges, mech.guidance.weight)
        clock.tick(n)
        phase_seconds["guidance"] += clock.now() - t0

    def kick_step(from_best: bool) -> None:
        t0 = clock.now()
        if from_best:
            state.reset_to_best()
        _kick(state, mech, rng, clock)
        phase_seconds["perturbation"] += clock.now() - t0

    no_imp = 0
    stop_reason = "loop_max"
    for it in range(sched.loop_max):
        if clock.now() >= sched.time_limit_s:
            stop_reason = "time"
            break
        if no_imp >= sched.max_no_improve:
            stop_reason = "stagnation"
            break
        budget = _Budget(clock, sched.time_limit_s, sched.ls_move_cap)
        improved_flag[0] = False
        t_phase = clock.now()
        other_before = phase_seconds["guidance"] + phase_seconds["perturbation"]
        _double_descent(state, mech, budget, on_improve)
        attempts = 0
        while not improved_flag[0] and attempts < PHASE_ATTEMPTS and not budget.exhausted():
            attempts += 1
            if guided:
                if attempts % sched.guidance_update_every == 0:
                    guidance_step()
            else:
                # unguided escape: kick from the incumbent (iterated local search)
                kick_step(from_best=True)
            _double_descent(state, mech, budget, on_improve)
        other_delta = phase_seconds["guidance"] + phase_seconds["perturbation"] - other_before
        phase_seconds["local_search"] += clock.now() - t_phase - other_delta
        if improved_flag[0]:
            no_imp = 0
        else:
            no_imp += 1
        # schedule-triggered diversification between phases
        if no_imp > 0 and no_imp % sched.perturbation_period == 0:
            kick_step(from_best=guided)

    t_end = clock.now()
    raw.append((t_end, rel_gap(state.best_cost)))
    return {
        "raw": raw,
        "payload": state.best_tour.tolist(),
        "objective": state.best_cost,
        "t_run": t_end,
        "phase_seconds": phase_seconds,
        "stop_reason": stop_reason,
    }
