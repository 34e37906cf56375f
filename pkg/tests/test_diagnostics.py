import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from discrete_langevin.core import DiscreteDomain
from discrete_langevin.diagnostics import (
    FlipStats,
    MomentAccumulator,
    autocorrelation,
    empirical_distribution,
    ess,
    ess_per_coordinate,
    flip_stats,
    hamming_kernel,
    log_mmd,
    mean_rmse,
    mmd2_hamming,
    mmd_permutation_test,
)
from discrete_langevin.samplers import Trace


def ar1(rho, n, rng):
    x = np.empty(n)
    x[0] = rng.normal() / np.sqrt(1 - rho**2)
    eps = rng.normal(size=n)
    for t in range(1, n):
        x[t] = rho * x[t - 1] + eps[t]
    return x


def test_ess_iid(rng):
    n = 20000
    assert abs(ess(rng.normal(size=n)) / n - 1) < 0.1


@pytest.mark.parametrize("rho", [0.5, 0.9])
def test_ess_ar1_matches_theory(rho, rng):
    # integrated autocorrelation time of AR(1) is (1 + rho) / (1 - rho)
    n = 200000
    expected = n * (1 - rho) / (1 + rho)
    assert abs(ess(ar1(rho, n, rng)) / expected - 1) < 0.15


def test_autocorrelation_ar1(rng):
    r = autocorrelation(ar1(0.7, 50000, rng))
    assert r[0] == pytest.approx(1.0)
    assert r[1] == pytest.approx(0.7, abs=0.02)
    assert r[2] == pytest.approx(0.49, abs=0.03)


def test_ess_edge_cases():
    assert ess(np.ones(50)) == 50.0
    with pytest.raises(ValueError):
        ess(np.arange(5.0))
    alt = np.tile([1.0, -1.0], 50)  # negative lag-1 correlation: sum stops at once
    assert ess(alt) == 100.0


@settings(max_examples=30)
@given(st.lists(st.floats(-1e3, 1e3), min_size=10, max_size=200))
def test_ess_is_clamped(xs):
    v = ess(np.array(xs))
    assert 1.0 <= v <= len(xs)


def test_ess_per_coordinate(rng):
    x = np.column_stack([rng.normal(size=5000), np.repeat(rng.normal(size=500), 10)])
    e = ess_per_coordinate(x)
    assert e[0] > 4000 and e[1] < 1000


def test_mean_rmse():
    assert mean_rmse([1.0, 2.0], [1.0, 4.0]) == pytest.approx(np.sqrt(2.0))
    with pytest.raises(ValueError):
        mean_rmse([1.0], [1.0, 2.0])


def test_moment_accumulator_merge(rng):
    xs = rng.random((30, 4, 3))
    a, b = MomentAccumulator(keep_samples=True), MomentAccumulator(keep_samples=True)
    for x in xs[:10]:
        a.update(x)
    for x in xs[10:]:
        b.update(x)
    merged = a.merge(b)
    np.testing.assert_allclose(merged.mean, xs.reshape(-1, 3).mean(0))
    assert merged.count == 120 and len(merged.samples) == 30
    with pytest.raises(ValueError):
        MomentAccumulator().mean


def test_hamming_kernel_by_hand():
    a = np.array([[0.0, 0.0], [1.0, 1.0]])
    b = np.array([[1.0, 0.0]])
    np.testing.assert_allclose(hamming_kernel(a, b), [[np.exp(-0.5)], [np.exp(-0.5)]])
    np.testing.assert_allclose(hamming_kernel(a, a), [[1.0, np.exp(-1.0)], [np.exp(-1.0), 1.0]])


def direct_mmd2(a, b):
    d = a.shape[1]
    k = lambda x, y: np.exp(-np.sum(x != y) / d)
    n, m = len(a), len(b)
    saa = sum(k(a[i], a[j]) for i in range(n) for j in range(n) if i != j) / (n * (n - 1))
    sbb = sum(k(b[i], b[j]) for i in range(m) for j in range(m) if i != j) / (m * (m - 1))
    sab = sum(k(x, y) for x in a for y in b) / (n * m)
    return saa + sbb - 2 * sab


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 8), st.integers(2, 8))
def test_mmd2_matches_direct_sum(seed, n, m):
    r = np.random.default_rng(seed)
    a = (r.random((n, 4)) < 0.3).astype(float)
    b = (r.random((m, 4)) < 0.6).astype(float)
    assert mmd2_hamming(a, b) == pytest.approx(direct_mmd2(a, b), abs=1e-12)
    dom = DiscreteDomain.binary(4)
    assert mmd2_hamming(a, b, dom) == pytest.approx(direct_mmd2(a, b), abs=1e-12)


def test_mmd2_needs_two_samples():
    with pytest.raises(ValueError):
        mmd2_hamming(np.zeros((1, 3)), np.zeros((5, 3)))


def test_log_mmd_floor():
    a = np.zeros((5, 3))
    assert log_mmd(a, a) == pytest.approx(np.log(1e-10))


def test_permutation_test(rng):
    same = mmd_permutation_test((rng.random((300, 8)) < 0.5), (rng.random((300, 8)) < 0.5), rng, n_perm=100)
    diff = mmd_permutation_test((rng.random((300, 8)) < 0.5), (rng.random((300, 8)) < 0.7), rng, n_perm=100)
    assert not same.rejects and same.p_value > 0.01
    assert diff.rejects and diff.p_value == pytest.approx(1 / 101)


def make_trace(accepted, changed, proposed, burn_in):
    n = len(accepted)
    return Trace("x", burn_in, 1, np.zeros(n), np.array(accepted), np.array(changed), np.array(proposed),
                 np.zeros(n), np.arange(burn_in, n), None, np.zeros(1))


def test_flip_stats_by_hand():
    tr = make_trace([True, True, False, True, False], [9, 4, 0, 2, 0], [9, 4, 3, 2, 5], burn_in=1)
    fs = flip_stats(tr)
    assert fs == FlipStats(mean_changed=1.5, mean_proposed=3.5, acceptance=0.5)
    assert fs.changed_per_accept == 3.0
    assert np.isnan(FlipStats(0.0, 1.0, 0.0).changed_per_accept)
    with pytest.raises(ValueError):
        flip_stats(make_trace([True], [1], [1], burn_in=1))


def test_empirical_distribution():
    dom = DiscreteDomain.spin(2)
    s = np.array([[-1, -1], [1, 1], [1, 1], [-1, 1.0]])
    np.testing.assert_allclose(empirical_distribution(s, dom), [0.25, 0.25, 0.0, 0.5])
