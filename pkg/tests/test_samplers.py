import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit

from discrete_langevin.core import DiscreteDomain
from discrete_langevin.dlp import DlpConfig, build_proposal
from discrete_langevin.exact_oracle import exact_target
from discrete_langevin.models import LogQuadraticModel
from discrete_langevin.samplers import (
    DMALA,
    DULA,
    LB1,
    GradFlip1,
    Gibbs1,
    RbmBlockGibbs,
    lb1_log_probs,
    make_sampler,
    read_samples_binary,
    run_chain,
    step_dmala,
    write_samples_binary,
    write_trace_csv,
)

from conftest import random_log_quadratic

ALL = [lambda: DULA(0.5), lambda: DMALA(0.5), lambda: Gibbs1(), lambda: Gibbs1("random"),
       lambda: LB1(1.0), lambda: LB1(), lambda: GradFlip1()]


@pytest.mark.parametrize("make", ALL)
def test_event_invariants(make, ising2_spin, rng):
    s = make()
    x = ising2_spin.domain.random_state(rng)
    s.reset()
    for _ in range(200):
        y, ev = s.step(ising2_spin, x, rng)
        assert ev.n_coords_changed == ising2_spin.domain.hamming(x, y)
        assert np.isclose(ev.energy_after, ising2_spin.energy(y))
        if not ev.accepted:
            np.testing.assert_array_equal(y, x)
        if isinstance(s, DULA):
            assert ev.accepted
        x = y


@pytest.mark.parametrize("make", ALL)
def test_batched_chains(make, ising2_binary, rng):
    x = ising2_binary.domain.random_state(rng, (6,))
    tr = run_chain(ising2_binary, make(), x, 30, burn_in=5, thin=5, rng=1)
    assert tr.energy.shape == (30, 6)
    np.testing.assert_array_equal(tr.recorded_steps, [5, 10, 15, 20, 25])
    assert tr.samples.shape == (5, 6, 4)


def test_dmala_self_proposal_always_accepted(ising2_spin, rng):
    x = np.array([1.0, 1.0, -1.0, 1.0])
    y, ev = step_dmala(ising2_spin, x, DlpConfig(1e-4), rng)
    assert ev.n_coords_proposed == 0
    assert ev.log_accept_ratio == 0.0 and ev.accepted
    np.testing.assert_array_equal(y, x)


def test_dula_small_alpha_never_moves(ising2_spin, rng):
    tr = run_chain(ising2_spin, DULA(1e-4), np.ones(4), 100, rng=rng)
    assert tr.n_coords_changed.sum() == 0


def test_cached_dmala_matches_stateless(ising2_spin):
    x0 = np.array([1.0, -1.0, -1.0, 1.0])
    r1, r2 = np.random.default_rng(9), np.random.default_rng(9)
    s = DMALA(0.4)
    a, b = x0, x0
    for _ in range(100):
        a, _ = s.step(ising2_spin, a, r1)
        b, _ = step_dmala(ising2_spin, b, DlpConfig(0.4), r2)
        np.testing.assert_array_equal(a, b)


def test_dmala_rejects_stochastic():
    with pytest.raises(ValueError):
        DMALA(DlpConfig(0.5, stochastic=True))


def test_gibbs_one_coordinate_is_exact(rng):
    # d = 1: every step is an exact draw from pi
    m = LogQuadraticModel(np.array([[0.3]]), np.array([0.4]), DiscreteDomain.categorical(1, 4))
    pi = exact_target(m).probs
    tr = run_chain(m, Gibbs1(), np.zeros((20000, 1)), 1, burn_in=0, rng=rng)
    freq = np.bincount(tr.final_state[:, 0].astype(int), minlength=4) / 20000
    se = np.sqrt(pi * (1 - pi) / 20000)
    assert np.all(np.abs(freq - pi) <= 4 * se)


def test_gibbs_independent_marginals(rng):
    # W = 0 on {0,1}: p(x_i = 1) = sigmoid(b_i); a full systematic sweep is an exact draw
    b = np.array([-1.0, 0.0, 2.0])
    m = LogQuadraticModel(np.zeros((3, 3)), b, DiscreteDomain.binary(3))
    n = 30000
    tr = run_chain(m, Gibbs1(), np.zeros((n, 3)), 3, burn_in=0, rng=rng)
    p = expit(b)
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(tr.final_state.mean(0) - p) <= 4 * se)


def test_lb1_uniform_target_is_distance_softmax():
    m = LogQuadraticModel(np.zeros((3, 3)), np.zeros(3), DiscreteDomain.spin(3))
    x = np.ones((1, 3))
    _, lp, _, _ = lb1_log_probs(m, x, 0.5)
    # ball: 2 entries per coordinate (one is x itself, invalid) plus explicit self
    w = np.exp(-4.0 / (2 * 0.5))
    probs = np.exp(lp[0])
    np.testing.assert_allclose(np.sort(probs[probs > 0]), np.sort([w, w, w, 1.0]) / (3 * w + 1))


def test_lb1_and_dlp_coincide_in_one_dimension_when_linear():
    m = LogQuadraticModel(np.zeros((1, 1)), np.array([0.8]), DiscreteDomain.binary(1))
    for x0 in (0.0, 1.0):
        x = np.array([[x0]])
        _, lp, _, _ = lb1_log_probs(m, x, 0.7)
        flip_lb = np.exp(lp[0, 1 - int(x0)])
        flip_dlp = build_proposal(m, x[0], DlpConfig(0.7)).probs[0, 1 - int(x0)]
        assert np.isclose(flip_lb, flip_dlp, atol=1e-14)


def test_block_gibbs_requires_rbm(ising2_binary, rng):
    with pytest.raises(TypeError):
        RbmBlockGibbs().step(ising2_binary, np.zeros(4), rng)


def test_block_gibbs_moves(small_rbm, rng):
    tr = run_chain(small_rbm, RbmBlockGibbs(), np.zeros(4), 200, rng=rng)
    assert tr.accepted.all() and tr.n_coords_changed.sum() > 0


def test_make_sampler():
    assert isinstance(make_sampler("dmala", alpha=0.2, precond=[1.0, 2.0]), DMALA)
    assert make_sampler("lb1").alpha is None
    with pytest.raises(ValueError, match="valid kinds"):
        make_sampler("hmc")
    with pytest.raises(ValueError):
        LB1(-1.0)
    with pytest.raises(ValueError):
        Gibbs1("backwards")


def test_run_chain_validation(ising2_spin):
    with pytest.raises(ValueError):
        run_chain(ising2_spin, DULA(0.1), np.ones(4), 10, burn_in=11)
    with pytest.raises(ValueError):
        run_chain(ising2_spin, DULA(0.1), np.ones(4), 10, thin=0)


def test_default_burn_in_and_recorders(ising2_spin):
    seen = []

    class R:
        def record(self, step, x, ev):
            seen.append(step)

    tr = run_chain(ising2_spin, DMALA(0.3), np.ones(4), 50, rng=0, recorders=[R()], store_samples=False)
    assert tr.burn_in == 5 and seen == list(range(5, 50)) and tr.samples is None


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["dula", "dmala", "gibbs1", "lb1", "gradflip1"]))
def test_seed_determinism(seed, kind):
    m = random_log_quadratic(np.random.default_rng(seed), 5)
    kw = {"alpha": 0.5} if kind in ("dula", "dmala") else {}
    a = run_chain(m, make_sampler(kind, **kw), np.zeros(5), 50, rng=seed)
    b = run_chain(m, make_sampler(kind, **kw), np.zeros(5), 50, rng=seed)
    assert a.digest() == b.digest()


def test_trace_csv(tmp_path, ising2_spin):
    tr = run_chain(ising2_spin, DMALA(0.3), np.ones((2, 4)), 10, burn_in=6, thin=2, rng=0)
    write_trace_csv(tr, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "step,chain,energy,accepted,coords_changed,coords_proposed"
    assert len(lines) == 1 + 2 * 2
    step, chain, energy = lines[1].split(",")[:3]
    assert (step, chain) == ("6", "0") and float(energy) == tr.energy[6, 0]


@given(st.lists(st.lists(st.integers(-3, 300), min_size=3, max_size=3), min_size=1, max_size=20))
def test_binary_samples_roundtrip(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("s") / "s.bin"
    arr = np.array(rows, dtype=float)
    write_samples_binary(arr, path)
    np.testing.assert_array_equal(read_samples_binary(path), arr)


def test_binary_samples_bad_magic(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(ValueError, match="magic"):
        read_samples_binary(tmp_path / "x.bin")
