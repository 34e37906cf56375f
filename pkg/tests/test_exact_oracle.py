import numpy as np
import pytest
from scipy.special import expit, logsumexp

from discrete_langevin.core import DiscreteDomain, StateSpaceTooLarge, state_table
from discrete_langevin.dlp import DlpConfig, build_proposal
from discrete_langevin.exact_oracle import (
    ReducibleKernelError,
    TransitionKernel,
    dula_stationary,
    exact_kernel,
    exact_mean,
    exact_target,
    l1_distance,
    log_quadratic_pi_alpha,
    stationary_distribution,
    theorem1_bound,
    theorem1_sweep,
    theorem2_probe,
    tv_distance,
    write_distribution_csv,
    write_kernel_csv,
)
from discrete_langevin.models import IsingLatticeModel, LogQuadraticModel, Perturbed1DModel
from discrete_langevin.samplers import DMALA, DULA, LB1, GradFlip1, Gibbs1, RbmBlockGibbs

from conftest import random_log_quadratic


def test_exact_target_one_coordinate():
    m = LogQuadraticModel(np.zeros((1, 1)), np.array([0.7]), DiscreteDomain.binary(1))
    t = exact_target(m)
    np.testing.assert_allclose(t.probs, [1 - expit(0.7), expit(0.7)])
    assert np.isclose(t.log_z, np.log1p(np.exp(0.7)))


def test_exact_mean_matches_table(ising2_binary):
    np.testing.assert_allclose(exact_mean(ising2_binary, chunk=3), exact_target(ising2_binary).mean(), atol=1e-14)
    with pytest.raises(StateSpaceTooLarge):
        exact_mean(ising2_binary, cap=8)


def test_dula_two_state_chain():
    # 1-d binary with U = c x: flip probs from 0 and 1, stationary p(1) = p01 / (p01 + p10)
    c, alpha = 1.3, 0.6
    m = LogQuadraticModel(np.zeros((1, 1)), np.array([c]), DiscreteDomain.binary(1))
    p01 = expit(0.5 * c - 1 / (2 * alpha))
    p10 = expit(-0.5 * c - 1 / (2 * alpha))
    P = exact_kernel(m, DULA(alpha)).matrix
    np.testing.assert_allclose(P, [[1 - p01, p01], [p10, 1 - p10]], atol=1e-15)
    np.testing.assert_allclose(dula_stationary(m, alpha), [p10, p01] / (p01 + p10), atol=1e-14)


SAMPLERS = [DMALA(0.1), DMALA(0.5), DMALA(1.0), Gibbs1("random"), Gibbs1(), LB1(0.8), LB1(), GradFlip1()]


@pytest.mark.parametrize("sampler", SAMPLERS, ids=lambda s: f"{s.name}")
@pytest.mark.parametrize("encoding", ["spin", "binary"])
def test_exact_samplers_preserve_target(sampler, encoding):
    m = IsingLatticeModel(2, 2, 0.1, 0.2, encoding=encoding)
    K = exact_kernel(m, sampler)
    pi = exact_target(m).probs
    assert tv_distance(stationary_distribution(K), pi) < 1e-9
    np.testing.assert_allclose(pi @ K.matrix, pi, atol=1e-14)


def test_dmala_detailed_balance(rng):
    m = random_log_quadratic(rng, 4, "binary", scale=1.0)
    P = exact_kernel(m, DMALA(0.7)).matrix
    pi = exact_target(m).probs
    flow = pi[:, None] * P
    np.testing.assert_allclose(flow, flow.T, atol=1e-15)


def test_block_gibbs_kernel(small_rbm):
    K = exact_kernel(small_rbm, RbmBlockGibbs())
    pi = exact_target(small_rbm).probs
    np.testing.assert_allclose(pi @ K.matrix, pi, atol=1e-14)


def test_categorical_dmala_kernel(rng):
    A = rng.normal(0, 0.3, (3, 3))
    m = LogQuadraticModel(A, rng.normal(size=3), DiscreteDomain.categorical(3, 3))
    pi = exact_target(m).probs
    assert tv_distance(stationary_distribution(exact_kernel(m, DMALA(0.5))), pi) < 1e-9


def test_kernel_rows_match_proposal(ising2_spin):
    # the DULA row at state k is the product of the per-coordinate tables
    states = state_table(ising2_spin.domain)
    P = exact_kernel(ising2_spin, DULA(0.4)).matrix
    q = build_proposal(ising2_spin, states[5], DlpConfig(0.4)).probs
    idx = ising2_spin.domain.to_index(states)
    np.testing.assert_allclose(P[5], np.prod(q[np.arange(4), idx], axis=1), atol=1e-15)


@pytest.mark.parametrize("alpha", [0.05, 0.3, 1.0])
def test_closed_form_pi_alpha(alpha, ising2_spin):
    np.testing.assert_allclose(log_quadratic_pi_alpha(ising2_spin, alpha), dula_stationary(ising2_spin, alpha),
                               atol=1e-12)


def test_stationary_methods_agree(rng):
    P = rng.random((6, 6))
    P /= P.sum(1, keepdims=True)
    ref = stationary_distribution(P, "gth")
    for method in ("power", "solve", "eig", "auto"):
        np.testing.assert_allclose(stationary_distribution(P, method), ref, atol=1e-10)
    np.testing.assert_allclose(ref @ P, ref, atol=1e-14)
    with pytest.raises(ValueError):
        stationary_distribution(P, "magic")


def test_reducible_kernel_rejected():
    with pytest.raises(ReducibleKernelError):
        stationary_distribution(np.eye(3))


def test_transient_states_get_zero_mass():
    # state 2 leaks into {0, 1} and is never re-entered
    P = np.array([[0.5, 0.5, 0.0], [0.2, 0.8, 0.0], [0.3, 0.3, 0.4]])
    np.testing.assert_allclose(stationary_distribution(P), [2 / 7, 5 / 7, 0.0], atol=1e-15)


def test_non_stochastic_kernel_rejected():
    with pytest.raises(ValueError, match="row-stochastic"):
        TransitionKernel(np.array([[0.5, 0.6], [0.5, 0.5]]), "bad")


def test_distances():
    assert l1_distance([1, 0], [0, 1]) == 2.0
    assert tv_distance([1, 0], [0, 1]) == 1.0
    with pytest.raises(ValueError):
        l1_distance([1], [0.5, 0.5])


def test_theorem1_bound_by_hand(ising2_spin):
    u = ising2_spin.energy(state_table(ising2_spin.domain))
    z = np.exp(logsumexp(u))
    lam = np.linalg.eigvalsh(ising2_spin.W).min()
    alpha = 0.4
    assert np.isclose(theorem1_bound(ising2_spin, alpha), z * np.exp(-(1 + alpha * lam) / (2 * alpha)))


def test_theorem1_sweep_rows(ising2_spin):
    rows = theorem1_sweep(ising2_spin, [0.1, 0.5])
    assert [r.alpha for r in rows] == [0.1, 0.5]
    assert all(r.distance <= r.bound for r in rows)


def test_theorem2_gradient_blind_case():
    # a = b = 0: the gradient at t = +-1 is eps pi cos(+-pi/2) = 0 for every eps
    x = np.array([[-1.0], [1.0]])
    q0 = build_proposal(Perturbed1DModel(0, 0, 0.0), x, DlpConfig(0.5)).probs
    for eps in (0.25, 0.5, 1.0):
        m = Perturbed1DModel(0, 0, eps)
        np.testing.assert_allclose(build_proposal(m, x, DlpConfig(0.5)).probs, q0, atol=1e-15)
        assert not np.allclose(exact_target(m).probs, [0.5, 0.5])
    assert theorem2_probe([0, 0.5, 1.0], 1.0, 0.1, 0.5).monotone


def test_exact_kernel_unsupported(ising2_spin):
    class Other(DULA):
        pass

    with pytest.raises(ValueError):
        exact_kernel(ising2_spin, type("S", (), {"name": "x"})())
    assert exact_kernel(ising2_spin, Other(0.3)).n == 16


def test_csv_dumps(tmp_path, ising2_spin):
    t = exact_target(ising2_spin)
    write_distribution_csv(t, tmp_path / "d.csv", {"pi_alpha": log_quadratic_pi_alpha(ising2_spin, 0.5)})
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "index,state,energy,prob,pi_alpha" and len(lines) == 17
    assert lines[1].split(",")[1] == "-1 -1 -1 -1"
    K = exact_kernel(ising2_spin, DMALA(0.5))
    write_kernel_csv(K, tmp_path / "k.csv")
    np.testing.assert_array_equal(np.loadtxt(tmp_path / "k.csv", delimiter=","), K.matrix)
