import math

import numpy as np
import pytest

from safepredict.bounds import (
    DOUBLING_FACTOR,
    BoundName,
    adaptive_bound,
    adaptive_constant_bound,
    adaptive_fixed_rate_bound,
    check_trace,
    doubling_bound,
    fixed_rate_bound,
    log_inv_shift,
    naive_bound,
    tuned_rate_bound,
    ws_doubling_bound,
)
from safepredict.meta import MetaConfig, optimal_fixed_rate, run_stream
from safepredict.trace import RunTrace, summarize

T = 50000
ALPHA = 10 / T


def test_naive_value():
    assert naive_bound(0.5, 10000, 100) == pytest.approx(0.58870501125773734551, rel=1e-13)


def test_naive_does_not_vanish_when_predictions_scale_as_root_t():
    vals = [naive_bound(0.5, n, math.sqrt(n)) for n in (10 ** 2, 10 ** 4, 10 ** 6)]
    assert vals[0] == pytest.approx(vals[-1], rel=1e-12)


def test_fixed_rate_at_optimum_equals_tuned():
    eta = optimal_fixed_rate(0.5, 0.05, 100.0)
    got = fixed_rate_bound(0.5, 0.05, eta, 100.0, 1000.0)
    assert got == pytest.approx(0.015818537611996257371, rel=1e-13)
    assert tuned_rate_bound(0.5, 0.05, 100.0, 1000.0) == pytest.approx(got, rel=1e-13)


def test_tuned_rate_is_minimum():
    etas = np.linspace(0.01, 1.0, 500)
    vals = [fixed_rate_bound(0.5, 0.05, e, 100.0, 1000.0) for e in etas]
    assert min(vals) >= tuned_rate_bound(0.5, 0.05, 100.0, 1000.0) - 1e-15


def test_doubling_value_and_ratio():
    assert doubling_bound(0.5, 0.05, 100.0, 1000.0) == pytest.approx(
        0.05400786565178653387, rel=1e-13)
    ratio = doubling_bound(0.5, 0.05, 100.0, 1000.0) / tuned_rate_bound(0.5, 0.05, 100.0, 1000.0)
    assert ratio == pytest.approx(2 + math.sqrt(2), rel=1e-14)
    assert DOUBLING_FACTOR / 2 == pytest.approx(3.4142135623730950488, rel=1e-15)


def test_adaptive_values():
    # constant alpha: the T*alpha + T*alpha**2 relaxation adds 10.002
    assert T * ALPHA + T * ALPHA ** 2 == pytest.approx(10.002, rel=1e-14)
    assert adaptive_constant_bound(0.5, 0.05, ALPHA, T, 100.0, 40000.0) == pytest.approx(
        0.0015534132040812057100, rel=1e-12)
    # exact shift over alpha_1..alpha_{T-1}
    assert math.log(2) + log_inv_shift(np.full(T - 1, ALPHA)) == pytest.approx(
        10.693947293910614777, rel=1e-12)
    assert adaptive_bound(0.5, 0.05, np.full(T - 1, ALPHA), 100.0, 40000.0) == pytest.approx(
        0.0015533260630622865007, rel=1e-12)


def test_relaxation_dominates_exact_shift():
    for a in (1e-5, 1e-3, 0.1, 0.4):
        exact = log_inv_shift(np.full(1000, a))
        assert exact <= 1000 * a + 1000 * a ** 2 + 1e-12


def test_ws_doubling_value_and_alpha_zero_reduction():
    assert ws_doubling_bound(0.5, 0.05, ALPHA, T, 100.0, 40000.0) == pytest.approx(
        0.0053036844293434970597, rel=1e-12)
    assert ws_doubling_bound(0.5, 0.05, 0.0, T, 100.0, 1000.0) == pytest.approx(
        doubling_bound(0.5, 0.05, 100.0, 1000.0), rel=1e-15)


def test_adaptive_fixed_rate_reduces_to_plain():
    a = adaptive_fixed_rate_bound(0.5, 0.05, 0.2, np.zeros(99), 30.0, 400.0)
    assert a == pytest.approx(fixed_rate_bound(0.5, 0.05, 0.2, 30.0, 400.0), rel=1e-15)


def test_log_inv_shift_edges():
    assert log_inv_shift([0.5, 0.5]) == pytest.approx(2 * math.log(2), rel=1e-15)
    assert log_inv_shift([0.1, 1.0]) == math.inf
    assert log_inv_shift([]) == 0.0
    with pytest.raises(ValueError):
        log_inv_shift([-0.1])


def test_bad_inputs():
    with pytest.raises(ValueError):
        naive_bound(0.5, 100, 0)
    with pytest.raises(ValueError):
        fixed_rate_bound(0.0, 0.05, 0.1, 1.0, 1.0)
    with pytest.raises(ValueError):
        adaptive_constant_bound(0.5, 0.05, 0.5, 10, 1.0, 1.0)


def _stream(n, seed, p=0.1):
    return (np.random.default_rng(seed).random(n) < p).astype(float)


@pytest.mark.parametrize("variant,kw,name", [
    ("plain", dict(eta=0.2), BoundName.FIXED_RATE),
    ("doubling", {}, BoundName.DOUBLING),
    ("adaptive", dict(eta=0.2, alpha=0.001), BoundName.ADAPTIVE),
    ("ws_doubling", dict(alpha=ALPHA, horizon=T), BoundName.WS_DOUBLING),
])
def test_check_trace_picks_bound_and_holds(variant, kw, name):
    cfg = MetaConfig(0.05, variant=variant, **kw)
    tr = run_stream(cfg, _stream(5000, 1), seed=2)
    rep = check_trace(tr, cfg)
    assert rep.bound_name is name
    assert rep.satisfied and rep.guaranteed
    assert rep.slack >= 0
    s = summarize(tr)
    assert rep.realized_error_rate == s.error_rate
    assert rep.as_dict()["bound"] == name.value


def test_check_trace_with_no_predictions_is_vacuous():
    cfg = MetaConfig(0.05, variant="doubling")
    empty = RunTrace.empty()
    rep = check_trace(empty, cfg)
    assert rep.satisfied and rep.vacuous and rep.T_star == 0


def test_high_epsilon_reports_unguaranteed():
    cfg = MetaConfig(0.6, variant="doubling")
    rep = check_trace(run_stream(cfg, _stream(2000, 0, 0.7), seed=0), cfg)
    assert not rep.guaranteed


def test_excess_rate_sandwich_on_runs():
    for seed in range(5):
        tr = run_stream(MetaConfig(0.05, variant="doubling"), _stream(4000, seed, 0.04), seed=seed)
        s = summarize(tr)
        assert math.sqrt(s.V_star) / s.T_star <= 1 / math.sqrt(s.T_star) + 1e-15
