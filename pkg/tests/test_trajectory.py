import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from trajevo.trajectory import (
    IncumbentTrace,
    MetricConfig,
    TracePoint,
    alt_metrics,
    decay_rate,
    fold_incumbent,
    load_trace,
    log_residual,
    save_trace,
    terminal_log_residual,
    time_avg_log_residual,
    trace_from_json,
    trace_to_json,
)


def pts(*pairs):
    return [TracePoint(t, g) for t, g in pairs]


CFG10 = MetricConfig(horizon=10.0)


# ---------------------------------------------------------------------------
# independent oracle: integrate the floored log of the step function with
# adaptive quadrature split at the breakpoints (exact on constant pieces)
# ---------------------------------------------------------------------------


def quad_avg_log_residual(trace: IncumbentTrace, cfg: MetricConfig) -> float:
    def ell(tau):
        return math.log(max(trace.gap_at(tau), cfg.floor))

    breaks = [t for t in trace.times.tolist() if 0.0 < t < cfg.horizon]
    total, _ = integrate.quad(
        ell, 0.0, cfg.horizon, points=breaks or None, limit=max(50, 10 * len(breaks) + 10)
    )
    return total / cfg.horizon


def random_trace(rng: np.random.Generator) -> IncumbentTrace:
    n = int(rng.integers(1, 12))
    times = np.concatenate([[0.0], np.sort(rng.uniform(0.0, 10.0, size=n - 1))])
    times = np.unique(times)
    gaps = np.sort(rng.uniform(0.0, 5.0, size=times.size))[::-1]
    if rng.random() < 0.1:
        gaps[-1] = 0.0
    end = float(rng.uniform(times[-1], 10.0))
    return IncumbentTrace(times, gaps, horizon=10.0, end_time=end)


# ---------------------------------------------------------------------------
# construction and folding
# ---------------------------------------------------------------------------


def test_trace_point_rejects_negative_gap():
    with pytest.raises(ValueError):
        TracePoint(0.0, -0.1)
    with pytest.raises(ValueError):
        TracePoint(-1.0, 0.5)


def test_fold_keeps_strict_running_minimum():
    trace = fold_incumbent(pts((0, 1.0), (1, 1.2), (2, 0.5), (3, 0.7)), horizon=10.0)
    assert trace.times.tolist() == [0.0, 2.0]
    assert trace.gaps.tolist() == [1.0, 0.5]
    assert trace.end_time == 3.0


def test_fold_single_point_extends_constant():
    trace = fold_incumbent(pts((0, 0.3)), horizon=5.0)
    assert trace.times.tolist() == [0.0]
    assert trace.gap_at(4.9) == 0.3
    assert trace.horizon == 5.0


def test_fold_drops_ties():
    trace = fold_incumbent(pts((0, 1.0), (1, 0.9), (2, 0.9)), horizon=10.0)
    assert trace.gaps.tolist() == [1.0, 0.9]
    assert trace.times.tolist() == [0.0, 1.0]
    assert trace.end_time == 2.0


def test_fold_errors():
    with pytest.raises(ValueError):
        fold_incumbent([], horizon=1.0)
    with pytest.raises(ValueError):
        fold_incumbent(pts((1.0, 0.5)), horizon=10.0)  # first point not at 0
    with pytest.raises(ValueError):
        fold_incumbent(pts((0, 1.0), (2, 0.5), (1, 0.4)), horizon=10.0)  # decreasing time
    with pytest.raises(ValueError):
        fold_incumbent(pts((0, 1.0), (11.0, 0.5)), horizon=10.0)  # beyond horizon


@given(st.lists(st.tuples(st.floats(0.01, 9.0), st.floats(0.0, 4.0)), max_size=15))
def test_fold_idempotent_and_monotone(raw_tail):
    raw = pts((0.0, 4.0), *sorted(raw_tail))
    trace = fold_incumbent(raw, horizon=10.0)
    assert np.all(np.diff(trace.gaps) < 0.0)
    refold = fold_incumbent(trace.points, horizon=10.0)
    assert np.array_equal(refold.times, trace.times)
    assert np.array_equal(refold.gaps, trace.gaps)


def test_incumbent_trace_invariants():
    with pytest.raises(ValueError):
        IncumbentTrace([0.0, 1.0], [0.5, 0.6], horizon=2.0)  # increasing gap
    with pytest.raises(ValueError):
        IncumbentTrace([0.0, 1.0], [0.6, 0.5], horizon=0.5)  # horizon too small
    with pytest.raises(ValueError):
        IncumbentTrace([0.0, 1.0], [0.6, 0.5], horizon=2.0, end_time=0.5)


# ---------------------------------------------------------------------------
# log_residual
# ---------------------------------------------------------------------------


def test_log_residual_values():
    assert log_residual(0.1, CFG10) == pytest.approx(-2.302585, abs=1e-6)
    assert log_residual(0.0, CFG10) == pytest.approx(math.log(1e-9), abs=1e-12)
    assert log_residual(1.0, CFG10) == 0.0
    with pytest.raises(ValueError):
        log_residual(-0.5, CFG10)


# ---------------------------------------------------------------------------
# time-averaged log residual / decay rate: frozen hand values
# ---------------------------------------------------------------------------


def test_avg_log_residual_constant_trace():
    trace = IncumbentTrace([0.0], [0.1], horizon=10.0)
    assert time_avg_log_residual(trace, CFG10) == pytest.approx(math.log(0.1), abs=1e-12)


def test_avg_log_residual_two_segments_hand_value():
    # (5*ln 0.1 + 5*ln 0.01)/10, evaluated by hand
    trace = IncumbentTrace([0.0, 5.0], [0.1, 0.01], horizon=10.0)
    assert time_avg_log_residual(trace, CFG10) == pytest.approx(-3.4538776, abs=1e-6)


def test_avg_log_residual_zero_length_last_segment():
    trace = IncumbentTrace([0.0, 10.0], [1.0, 0.5], horizon=10.0)
    assert time_avg_log_residual(trace, CFG10) == 0.0


def test_decay_rate_constant_trace_is_zero():
    trace = IncumbentTrace([0.0], [0.1], horizon=10.0)
    assert decay_rate(trace, CFG10) == 0.0


def test_decay_rate_hand_value():
    trace = IncumbentTrace([0.0, 5.0], [0.1, 0.01], horizon=10.0)
    assert decay_rate(trace, CFG10) == pytest.approx(0.2302585, abs=1e-6)


def test_decay_rate_solved_at_start_flagged_zero():
    trace = IncumbentTrace([0.0], [0.0], horizon=10.0)
    assert trace.solved_at_start
    assert decay_rate(trace, CFG10) == 0.0


def test_decay_rate_uses_pinned_initial_residual():
    trace = IncumbentTrace([0.0, 5.0], [0.1, 0.01], horizon=10.0)
    pinned = IncumbentTrace(
        [0.0, 5.0], [0.1, 0.01], horizon=10.0, initial_log_residual=math.log(0.1)
    )
    assert decay_rate(pinned, CFG10) == pytest.approx(decay_rate(trace, CFG10), abs=1e-12)


def test_terminal_log_residual():
    trace = IncumbentTrace([0.0, 2.0], [1.0, 0.5], horizon=10.0)
    assert terminal_log_residual(trace, CFG10) == pytest.approx(math.log(0.5), abs=1e-12)
    floored = IncumbentTrace([0.0, 2.0], [1.0, 0.0], horizon=10.0)
    assert terminal_log_residual(floored, CFG10) == pytest.approx(math.log(1e-9), abs=1e-12)
    cfg3 = MetricConfig(horizon=3.0)
    single = IncumbentTrace([0.0], [0.2], horizon=3.0)
    assert terminal_log_residual(single, cfg3) == pytest.approx(math.log(0.2), abs=1e-12)


# ---------------------------------------------------------------------------
# linear recovery: for a uniformly sampled exact-log-linear trace with m
# segments the left-endpoint Riemann estimator returns k*(1 - 1/m) exactly:
#   J*T = sum_i (ell0 - k*i*h)*h = T*ell0 - k*h^2*m(m-1)/2
#       = T*ell0 - k*T^2/2 + k*T^2/(2m)
#   => (2/T)*(ell0 - J) = k*(1 - 1/m)
# so the discretization bias is k/m; the test asserts that exact bound.
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("k", [0.1, 1.0, 10.0])
@pytest.mark.parametrize("m", [100, 1000])
def test_linear_recovery_matches_exact_bias(k, m):
    T, ell0 = 1.0, 0.0
    times = np.linspace(0.0, T, m + 1)
    gaps = np.exp(ell0 - k * times)
    trace = IncumbentTrace(times, gaps, horizon=T)
    cfg = MetricConfig(horizon=T)
    est = decay_rate(trace, cfg)
    assert est == pytest.approx(k * (1.0 - 1.0 / m), rel=1e-9)
    assert abs(est - k) <= k / m + 1e-9


# ---------------------------------------------------------------------------
# properties
# ---------------------------------------------------------------------------


def test_floor_safety_all_zero_gap():
    trace = IncumbentTrace([0.0, 1.0], [0.5, 0.0], horizon=10.0)
    assert math.isfinite(time_avg_log_residual(trace, CFG10))
    assert math.isfinite(decay_rate(trace, CFG10))


def test_sampling_insensitivity():
    trace = IncumbentTrace([0.0, 5.0], [0.1, 0.01], horizon=10.0)
    # same incumbent values logged at extra intermediate times
    redundant = fold_incumbent(
        pts((0, 0.1), (1, 0.1), (3, 0.1), (5, 0.01), (7, 0.01), (9, 0.01)), horizon=10.0
    )
    assert time_avg_log_residual(redundant, CFG10) == pytest.approx(
        time_avg_log_residual(trace, CFG10), abs=1e-12
    )
    assert decay_rate(redundant, CFG10) == pytest.approx(
        decay_rate(trace, CFG10), abs=1e-12
    )


def test_decay_rate_non_negative_randomized():
    rng = np.random.default_rng(7)
    for _ in range(300):
        trace = random_trace(rng)
        assert decay_rate(trace, CFG10) >= -1e-12


def test_quadrature_oracle_equivalence():
    rng = np.random.default_rng(11)
    for _ in range(200):
        trace = random_trace(rng)
        mine = time_avg_log_residual(trace, CFG10)
        oracle = quad_avg_log_residual(trace, CFG10)
        assert mine == pytest.approx(oracle, abs=1e-9)


# ---------------------------------------------------------------------------
# alternative metrics
# ---------------------------------------------------------------------------


def test_time_to_10pct_reached():
    trace = IncumbentTrace([0.0, 3.0], [1.0, 0.09], horizon=10.0)
    assert alt_metrics(trace, CFG10).time_to_10pct == 3.0


def test_linear_auc_constant():
    trace = IncumbentTrace([0.0], [0.5], horizon=10.0)
    assert alt_metrics(trace, CFG10).linear_auc == pytest.approx(0.5, abs=1e-12)


def test_time_to_10pct_unreached_is_horizon():
    trace = IncumbentTrace([0.0, 4.0], [1.0, 0.5], horizon=10.0)
    assert alt_metrics(trace, CFG10).time_to_10pct == 10.0


def test_terminal_time_survives_folding():
    trace = fold_incumbent(pts((0, 1.0), (2, 0.5), (7, 0.5)), horizon=10.0)
    assert alt_metrics(trace, CFG10).terminal_time == 7.0


# ---------------------------------------------------------------------------
# trace file round trip
# ---------------------------------------------------------------------------


def test_trace_json_round_trip_bit_exact(tmp_path):
    trace = IncumbentTrace(
        [0.0, 1.1234567890123457, 5.000000000000001],
        [0.9999999999999999, 0.123456789012345, 1e-300],
        horizon=10.0,
        end_time=7.77777777777,
    )
    cfg = MetricConfig(horizon=10.0, floor=1e-9)
    path = tmp_path / "trace.json"
    save_trace(trace, cfg, path)
    loaded, loaded_cfg = load_trace(path)
    assert loaded == trace
    assert loaded_cfg == cfg


@given(
    st.lists(
        st.floats(1e-12, 1e6, allow_nan=False, allow_infinity=False),
        min_size=1,
        max_size=8,
    )
)
@settings(max_examples=60)
def test_trace_json_round_trip_hypothesis(gaps):
    gaps = sorted(gaps, reverse=True)
    times = np.arange(len(gaps), dtype=float)
    trace = IncumbentTrace(times, gaps, horizon=float(len(gaps)) + 1.0)
    cfg = MetricConfig(horizon=trace.horizon)
    blob = json.dumps(trace_to_json(trace, cfg))
    restored, restored_cfg = trace_from_json(json.loads(blob))
    assert restored == trace
    assert restored_cfg == cfg


def test_trace_from_json_missing_key():
    with pytest.raises(ValueError):
        trace_from_json({"horizon": 1.0, "points": [{"t": 0.0, "gap": 1.0}]})
