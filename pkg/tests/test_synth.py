import io

import numpy as np
import pytest

from safepredict.synth import (
    REPRESENTATIVE_GRID,
    ChangePointSpec,
    derive_seeds,
    error_rate_at,
    error_rates,
    generate_losses,
    oracle_weights,
    read_losses_csv,
    representative_specs,
    write_losses_csv,
)


def test_block_boundaries_by_ceiling():
    spec = ChangePointSpec(100, num_change=1)
    assert error_rate_at(spec, 50) == 0.2
    assert error_rate_at(spec, 51) == 0.02
    assert error_rate_at(spec, 1) == 0.2 and error_rate_at(spec, 100) == 0.02


def test_vector_matches_scalar():
    for spec in representative_specs(997):
        rates = error_rates(spec)
        assert rates.tolist() == [error_rate_at(spec, t) for t in range(1, 998)]


@pytest.mark.parametrize("n", [0, 1, 3, 9])
def test_blocks_have_equal_length(n):
    spec = ChangePointSpec(1000, num_change=n)
    rates = error_rates(spec)
    changes = np.flatnonzero(np.diff(rates)) + 1
    lengths = np.diff(np.concatenate([[0], changes, [1000]]))
    assert len(lengths) == n + 1
    assert all(l == 1000 // (n + 1) for l in lengths)


def test_empirical_block_means():
    spec = ChangePointSpec(50000, num_change=1, seed=11)
    l = generate_losses(spec)
    assert abs(l[:25000].mean() - 0.2) <= 0.006
    assert abs(l[25000:].mean() - 0.02) <= 0.002


def test_losses_reproducible_and_binary():
    spec = ChangePointSpec(5000, 3, 0.1, 0.2, seed=4)
    a, b = generate_losses(spec), generate_losses(spec)
    assert np.array_equal(a, b)
    assert set(np.unique(a)) <= {0.0, 1.0}
    assert not np.array_equal(a, generate_losses(ChangePointSpec(5000, 3, 0.1, 0.2, seed=5)))


def test_oracle_efficiency_half():
    spec = ChangePointSpec(50000, 1, 0.02, 0.2)
    w = oracle_weights(spec, 0.05)
    assert w.mean() == 0.5
    assert np.all(w[:25000] == 0) and np.all(w[25000:] == 1)


def test_oracle_boundary_is_inclusive():
    spec = ChangePointSpec(10, 1, 0.05, 0.2)
    assert oracle_weights(spec, 0.05).sum() == 5


def test_representative_grid():
    assert len(REPRESENTATIVE_GRID) == 12
    assert (1, 0.02, 0.2) in REPRESENTATIVE_GRID


@pytest.mark.parametrize("kw", [
    dict(horizon=0), dict(horizon=10, num_change=-1), dict(horizon=3, num_change=5),
    dict(horizon=10, eps_low=0.3, eps_hi=0.2), dict(horizon=10, eps_hi=1.5),
])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        ChangePointSpec(**kw)


def test_error_rate_at_range():
    with pytest.raises(ValueError):
        error_rate_at(ChangePointSpec(10), 11)


def test_csv_roundtrip():
    l = generate_losses(ChangePointSpec(300, seed=2))
    buf = io.StringIO()
    write_losses_csv(l, buf)
    buf.seek(0)
    assert np.array_equal(read_losses_csv(buf), l)


def test_csv_errors_name_line():
    with pytest.raises(ValueError, match="line 3"):
        read_losses_csv(io.StringIO("step,loss\n1,0\n2,abc\n"))
    with pytest.raises(ValueError, match="line 2"):
        read_losses_csv(io.StringIO("loss\n1.5\n"))
    with pytest.raises(ValueError, match="line 1"):
        read_losses_csv(io.StringIO("step,value\n1,0\n"))


def test_derived_seeds_independent_and_stable():
    a, b = derive_seeds(7)
    assert a != b
    assert derive_seeds(7) == [a, b]
    assert derive_seeds(8) != [a, b]
