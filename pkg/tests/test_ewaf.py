import math

from hypothesis import given, settings, strategies as st
import numpy as np
import pytest

from safepredict.ewaf import (
    ExpertEnsemble,
    MAX_VIRTUAL_HORIZON,
    build_virtual_ensemble,
    ewaf_regret_bound,
    ewaf_update,
    expected_loss,
    mix_loss,
    mix_loss_regret_bound,
    mixability_gap,
    virtual_marginals,
)

from oracles import brute_marginals


def test_update_two_experts_by_hand():
    ens = ExpertEnsemble.from_weights([0.5, 0.5], 1.0)
    w = ewaf_update(ens, [0.0, 1.0]).weights
    # 1/(1+e^-1) and e^-1/(1+e^-1), 50-digit reference
    assert w[0] == pytest.approx(0.73105857863000487925, abs=1e-15)
    assert w[1] == pytest.approx(0.26894142136999512075, abs=1e-15)


def test_expected_loss_arithmetic():
    ens = ExpertEnsemble.from_weights([0.2, 0.8], 1.0)
    assert expected_loss(ens, [1.0, 0.25]) == pytest.approx(0.4, abs=1e-15)


def test_mix_loss_and_gap_by_hand():
    ens = ExpertEnsemble.from_weights([0.5, 0.5], 1.0)
    assert mix_loss(ens, [0, 1]) == pytest.approx(0.37988549304172247537, abs=1e-15)
    assert mixability_gap(ens, [0, 1]) == pytest.approx(0.12011450695827752463, abs=1e-15)


def test_regret_constants():
    assert mix_loss_regret_bound(0.5, 1.0) == pytest.approx(math.log(2), abs=1e-15)
    assert ewaf_regret_bound(2, 8) == pytest.approx(1.6651092223153955127, abs=1e-14)
    assert ewaf_regret_bound(2, 50000) == pytest.approx(131.63844238670796706, abs=1e-10)


def test_tuned_rate_gives_stated_regret():
    # log N / eta + eta T / 8 at eta = sqrt(8 log N / T)
    n, T = 4, 1000
    eta = math.sqrt(8 * math.log(n) / T)
    total = mix_loss_regret_bound(1 / n, eta) + eta * T / 8
    assert total == pytest.approx(ewaf_regret_bound(n, T), rel=1e-12)


def test_validation():
    with pytest.raises(ValueError):
        ExpertEnsemble.from_weights([0.5, 0.6], 1.0)
    with pytest.raises(ValueError):
        ExpertEnsemble.from_weights([0.5, 0.5], 0.0)
    ens = ExpertEnsemble.uniform(3, 1.0)
    with pytest.raises(ValueError):
        ewaf_update(ens, [0.0, 1.0])
    with pytest.raises(ValueError):
        ewaf_update(ens, [0.0, 1.5, 0.0])
    with pytest.raises(ValueError):
        mix_loss_regret_bound(0.0, 1.0)


def test_zero_weight_expert_stays_dead():
    ens = ExpertEnsemble.from_weights([0.0, 1.0], 2.0)
    for _ in range(5):
        ens = ewaf_update(ens, [0.0, 1.0])
    assert ens.weights[0] == 0.0


def test_no_underflow_after_long_bad_run():
    ens = ExpertEnsemble.from_weights([0.5, 0.5], 1.0)
    for _ in range(2000):
        ens = ewaf_update(ens, [1.0, 0.0])
    assert np.isfinite(ens.log_weights[0])
    assert ens.log_weights[0] == pytest.approx(-2000.0, abs=1e-9)


weights_and_losses = st.integers(2, 6).flatmap(lambda n: st.tuples(
    st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n),
    st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n),
))


@settings(max_examples=200, deadline=None)
@given(weights_and_losses, st.floats(1e-3, 1.0))
def test_gap_nonnegative_and_bounded_by_weighted_variance(wl, eta):
    raw, losses = wl
    w = np.asarray(raw) / np.sum(raw)
    ens = ExpertEnsemble.from_weights(w, eta)
    gap = mixability_gap(ens, losses)
    mean = float(np.dot(w, losses))
    var = float(np.dot(w, (mean - np.asarray(losses)) ** 2))
    assert gap >= -1e-12
    assert gap <= eta * var + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 5), st.floats(0.05, 3.0), st.integers(0, 2 ** 32 - 1))
def test_cumulative_mix_loss_regret(n, eta, seed):
    rng = np.random.default_rng(seed)
    w0 = rng.dirichlet(np.ones(n))
    ens = ExpertEnsemble.from_weights(w0, eta)
    losses = rng.random((30, n))
    total = 0.0
    for l in losses:
        total += mix_loss(ens, l)
        ens = ewaf_update(ens, l)
    per_expert = losses.sum(axis=0)
    for i in range(n):
        assert total <= per_expert[i] + mix_loss_regret_bound(w0[i], eta) + 1e-9


def test_virtual_ensemble_matches_enumeration():
    rng = np.random.default_rng(7)
    T = 6
    alphas = rng.uniform(0, 0.3, T - 1)
    betas = rng.uniform(0.7, 1.0, T - 1)
    base = rng.random(T)
    v = build_virtual_ensemble(T, 0.4, 0.1, alphas, betas, base)
    got = virtual_marginals(v, 1.3)
    want = brute_marginals(T, 0.4, 0.1, alphas, betas, base, 1.3)
    assert np.allclose(got, [float(x) for x in want], atol=1e-13, rtol=0)


def test_virtual_ensemble_shape_and_limits():
    v = build_virtual_ensemble(3, 0.5, 0.05, 0.01, 1.0, [0.0, 1.0, 0.0])
    assert v.bits.shape == (8, 3)
    assert v.losses.shape == (3, 8)
    assert v.ensemble.weights.sum() == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        build_virtual_ensemble(MAX_VIRTUAL_HORIZON + 1, 0.5, 0.05, 0.0, 1.0,
                               np.zeros(MAX_VIRTUAL_HORIZON + 1))
    with pytest.raises(ValueError):
        build_virtual_ensemble(3, 0.5, 0.05, [0.1], 1.0, [0, 0, 0])
