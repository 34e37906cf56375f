"""Brute-force ground truth on small state spaces.

States are indexed in the lexicographic order of :func:`core.state_table`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eig, solve
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import logsumexp

from .core import DEFAULT_STATE_CAP, DiscreteDomain, EnergyModel, _check_cap, state_index, state_table
from .dlp import DlpConfig, build_proposal
from .models import LogQuadraticModel, Perturbed1DModel, RbmModel, lambda_min
from .samplers import (
    DMALA, DULA, GradFlip1, Gibbs1, LB1, RbmBlockGibbs, Sampler, gradflip_log_probs, flip_deltas,
    lb1_log_probs,
)


class ReducibleKernelError(ValueError):
    """The kernel is not irreducible, so its stationary distribution is not unique."""


@dataclass
class ExactDistribution:
    domain: DiscreteDomain
    states: np.ndarray
    energies: np.ndarray
    probs: np.ndarray
    log_z: float

    def mean(self) -> np.ndarray:
        return np.tensordot(self.probs, self.states, axes=1)


@dataclass
class TransitionKernel:
    matrix: np.ndarray
    sampler: str

    def __post_init__(self):
        rows = self.matrix.sum(1)
        if np.any(self.matrix < -1e-15) or np.max(np.abs(rows - 1.0)) > 1e-10:
            raise ValueError(f"{self.sampler} kernel is not row-stochastic")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def exact_target(model: EnergyModel, cap: int = DEFAULT_STATE_CAP) -> ExactDistribution:
    states = state_table(model.domain, cap)
    u = np.asarray(model.energy(states), dtype=float)
    log_z = float(logsumexp(u))
    return ExactDistribution(model.domain, states, u, np.exp(u - log_z), log_z)


def exact_mean(model: EnergyModel, cap: int = DEFAULT_STATE_CAP, chunk: int = 2**18) -> np.ndarray:
    """``E_pi[x]`` by streaming over the state space in blocks of ``chunk`` states.

    Memory stays ``O(chunk * d)``, so this reaches further than
    :func:`exact_target`; the cap still bounds the run time.
    """
    dom = model.domain
    _check_cap(dom, cap)
    s, d = dom.n_values, dom.dim
    powers = s ** np.arange(d - 1, -1, -1)
    shift = -np.inf
    total = 0.0
    acc = np.zeros(dom.state_shape)
    for start in range(0, dom.n_states, chunk):
        k = np.arange(start, min(start + chunk, dom.n_states))
        states = dom.from_index((k[:, None] // powers[None, :]) % s)
        u = np.asarray(model.energy(states), dtype=float)
        m = max(shift, float(u.max()))
        w = np.exp(u - m)
        rescale = np.exp(shift - m)
        acc = acc * rescale + np.tensordot(w, states, axes=1)
        total = total * rescale + w.sum()
        shift = m
    return acc / total


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def _log_q_matrix(domain: DiscreteDomain, log_probs: np.ndarray, states: np.ndarray) -> np.ndarray:
    """``out[x, y] = sum_i log_probs[x, i, idx(y_i)]`` for a factorized proposal."""
    idx = domain.to_index(states)
    n = len(states)
    out = np.zeros((n, n))
    for i in range(domain.dim):
        out += log_probs[:, i, :][:, idx[:, i]]
    return out


def _mh_kernel(log_q: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Fold MH accept/reject of proposal ``exp(log_q)`` into a kernel for target ``exp(u)``."""
    with np.errstate(invalid="ignore"):
        log_ratio = u[None, :] - u[:, None] + log_q.T - log_q
    log_acc = np.minimum(0.0, np.nan_to_num(log_ratio, nan=-np.inf))
    P = np.where(np.isneginf(log_q), 0.0, np.exp(log_q + log_acc))
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, np.maximum(0.0, 1.0 - P.sum(1)))
    return P


def dlp_log_q(model: EnergyModel, cfg: DlpConfig, states: np.ndarray) -> np.ndarray:
    if cfg.stochastic:
        raise ValueError("exact kernels need a deterministic gradient")
    p = build_proposal(model, states, cfg)
    return _log_q_matrix(model.domain, p.log_probs, states)


def gibbs_coordinate_kernel(model: EnergyModel, i: int, states: np.ndarray, u: np.ndarray,
                            sparse: bool = False):
    """Kernel that resamples coordinate ``i`` from its exact conditional.

    Each row has ``n_values`` nonzeros; ``sparse=True`` returns a CSR matrix.
    """
    dom = model.domain
    idx = dom.to_index(states)
    radix = dom.n_values ** (dom.dim - 1 - i)
    base = np.arange(len(states)) - idx[:, i] * radix
    targets = base[:, None] + np.arange(dom.n_values)[None, :] * radix
    lp = u[targets] - logsumexp(u[targets], axis=1, keepdims=True)
    n = len(states)
    if sparse:
        return csr_matrix((np.exp(lp).reshape(-1), targets.reshape(-1),
                           np.arange(0, n * dom.n_values + 1, dom.n_values)), shape=(n, n))
    P = np.zeros((n, n))
    np.put_along_axis(P, targets, np.exp(lp), axis=1)
    return P


def _ball_kernel(log_probs, nb_index, n):
    Q = np.zeros((n, n))
    rows = np.repeat(np.arange(n), nb_index.shape[1])
    np.add.at(Q, (rows, nb_index.reshape(-1)), np.exp(log_probs).reshape(-1))
    with np.errstate(divide="ignore"):
        return np.log(Q)


def exact_kernel(model: EnergyModel, sampler: Sampler, cap: int = 2**12) -> TransitionKernel:
    """Dense one-step transition matrix of ``sampler`` on ``model``.

    Gibbs-1 uses a random coordinate per step; a systematic-scan
    :class:`Gibbs1` gives the kernel of one full sweep instead.
    """
    dom = model.domain
    states = state_table(dom, cap)
    n = len(states)
    u = np.asarray(model.energy(states), dtype=float)
    if isinstance(sampler, DULA):
        P = np.exp(dlp_log_q(model, sampler.cfg, states))
    elif isinstance(sampler, DMALA):
        P = _mh_kernel(dlp_log_q(model, sampler.cfg, states), u)
    elif isinstance(sampler, Gibbs1):
        kernels = (gibbs_coordinate_kernel(model, i, states, u, sparse=True) for i in range(dom.dim))
        if sampler.order == "random":
            P = (sum(kernels) / dom.dim).toarray()
        else:
            # one sweep: P = K_0 K_1 ... K_{d-1}, computed as (K^T P^T)^T
            P = np.eye(n)
            for K in kernels:
                P = np.asarray((K.T @ P.T).T)
    elif isinstance(sampler, LB1):
        nb, lp, _, _ = lb1_log_probs(model, states, sampler.alpha)
        P = _mh_kernel(_ball_kernel(lp, state_index(dom, nb), n), u)
    elif isinstance(sampler, GradFlip1):
        lp = gradflip_log_probs(model, states)
        nb = states[:, None, :] + np.eye(dom.dim)[None] * flip_deltas(dom, states)[:, :, None]
        P = _mh_kernel(_ball_kernel(lp, state_index(dom, nb), n), u)
    elif isinstance(sampler, RbmBlockGibbs):
        P = _rbm_block_kernel(model, states)
    else:
        raise ValueError(f"no exact kernel for sampler {sampler.name!r}")
    return TransitionKernel(P, sampler.name)


def _rbm_block_kernel(model: RbmModel, states: np.ndarray) -> np.ndarray:
    if not isinstance(model, RbmModel):
        raise TypeError("block Gibbs needs an RbmModel")
    hs = np.array(list(itertools.product([0.0, 1.0], repeat=model.n_hidden)))
    ph = model.hidden_probs(states)  # (n, h)
    p_h_given_x = np.prod(np.where(hs[None] == 1, ph[:, None], 1 - ph[:, None]), axis=-1)
    px = model.visible_probs(hs)  # (H, v)
    p_x_given_h = np.prod(np.where(states[None] == 1, px[:, None], 1 - px[:, None]), axis=-1)
    return p_h_given_x @ p_x_given_h


# ---------------------------------------------------------------------------
# stationary distributions
# ---------------------------------------------------------------------------

def is_irreducible(P: np.ndarray) -> bool:
    n_comp, _ = connected_components(P > 0, directed=True, connection="strong")
    return n_comp == 1


def closed_class(P: np.ndarray) -> np.ndarray:
    """Indices of the unique closed communicating class of ``P``.

    States outside it are transient and carry no stationary mass.  Raises
    :class:`ReducibleKernelError` when there are several closed classes,
    since the stationary distribution is then not unique.
    """
    n_comp, labels = connected_components(P > 0, directed=True, connection="strong")
    if n_comp == 1:
        return np.arange(P.shape[0])
    src, dst = np.nonzero(P > 0)
    leaks = np.zeros(n_comp, dtype=bool)
    leaks[labels[src][labels[src] != labels[dst]]] = True
    closed = np.flatnonzero(~leaks)
    if len(closed) != 1:
        raise ReducibleKernelError(
            f"kernel has {len(closed)} closed classes; the proposal may have degenerated (alpha too small?)")
    return np.flatnonzero(labels == closed[0])


def _residual(v, P):
    return float(np.abs(v @ P - v).sum())


def _power(P, tol, max_iter):
    """Power iteration, accelerated by squaring the kernel between residual checks."""
    v = np.full(P.shape[0], 1.0 / P.shape[0])
    M = P
    done = 0
    while done < max_iter:
        v = v @ M
        v /= v.sum()
        if _residual(v, P) <= tol:
            return v
        done = 2 * done + 1
        M = M @ M
    return None


def _gth(P):
    """Grassmann-Taksar-Heyman elimination; subtraction-free, so accurate even
    when off-diagonal mass is far below machine epsilon."""
    A = np.array(P, dtype=float)
    n = A.shape[0]
    for k in range(n - 1, 0, -1):
        s = A[k, :k].sum()
        if s <= 0:
            raise ReducibleKernelError("zero escape mass during elimination")
        A[:k, k] /= s
        A[:k, :k] += np.outer(A[:k, k], A[k, :k])
    v = np.zeros(n)
    v[0] = 1.0
    for k in range(1, n):
        v[k] = v[:k] @ A[:k, k]
    return v / v.sum()


def _solve(P):
    n = P.shape[0]
    A = np.eye(n) - P + np.ones((n, n))
    v = solve(A.T, np.ones(n))
    v = np.clip(v, 0.0, None)
    return v / v.sum()


def _eig(P):
    w, vl = eig(P.T)
    k = np.argmin(np.abs(w - 1.0))
    v = np.abs(np.real(vl[:, k]))
    return v / v.sum()


def stationary_distribution(kernel: TransitionKernel | np.ndarray, method: str = "auto",
                            tol: float = 1e-12, max_iter: int = 10**6) -> np.ndarray:
    """Left eigenvector of ``P`` for eigenvalue 1.

    ``method`` is ``"power"``, ``"gth"`` (subtraction-free elimination),
    ``"solve"`` (direct linear solve), ``"eig"`` (dense eigensolver) or
    ``"auto"``: GTH up to 512 states; above that the linear solve, then power
    iteration, then the eigensolver, accepting the first result whose
    residual ``|vP - v|_1`` is at most ``max(tol, 1e-10)``.  Transient states
    (outside the single closed class) get probability 0.
    """
    P = kernel.matrix if isinstance(kernel, TransitionKernel) else np.asarray(kernel, dtype=float)
    keep = closed_class(P)
    if len(keep) == P.shape[0]:
        return _stationary(P, method, tol, max_iter)
    out = np.zeros(P.shape[0])
    out[keep] = _stationary(P[np.ix_(keep, keep)], method, tol, max_iter)
    return out


def _stationary(P, method, tol, max_iter):
    if method == "power":
        v = _power(P, tol, max_iter)
        if v is None:
            raise RuntimeError("power iteration did not converge")
        return v
    if method == "solve":
        return _solve(P)
    if method == "gth":
        return _gth(P)
    if method == "eig":
        return _eig(P)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    accept = max(tol, 1e-10)
    if P.shape[0] <= 512:
        return _gth(P)
    for fn in (_solve, lambda M: _power(M, tol, 64), _eig):
        v = fn(P)
        if v is not None and _residual(v, P) <= accept:
            return v
    raise RuntimeError("no method reached the residual tolerance")


def l1_distance(p, q) -> float:
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("distributions have different lengths")
    return float(np.abs(p - q).sum())


def tv_distance(p, q) -> float:
    """Total variation, half the L1 distance."""
    return 0.5 * l1_distance(p, q)


# ---------------------------------------------------------------------------
# DULA bias on log-quadratic targets
# ---------------------------------------------------------------------------

def dula_stationary(model: EnergyModel, alpha: float, cap: int = 2**12, method: str = "auto") -> np.ndarray:
    return stationary_distribution(exact_kernel(model, DULA(alpha), cap), method=method)


def log_quadratic_pi_alpha(model: LogQuadraticModel, alpha: float, cap: int = 2**12) -> np.ndarray:
    """Closed-form DULA stationary distribution ``pi_alpha ∝ Z_alpha(x) pi(x)``.

    ``Z_alpha(x) = sum_y exp((U(y) - U(x))/2 - (y-x)^T (I/(2 alpha) + W/2) (y-x))``.
    Valid only for scalar-coordinate log-quadratic models.
    """
    if model.domain.is_onehot:
        raise ValueError("closed form is implemented for scalar coordinates only")
    states = state_table(model.domain, cap)
    u = model.energy(states)
    diff = states[None, :, :] - states[:, None, :]
    M = np.eye(model.domain.dim) / (2 * alpha) + model.W / 2
    quad = np.einsum("xyi,ij,xyj->xy", diff, M, diff)
    log_z_alpha = logsumexp(0.5 * (u[None, :] - u[:, None]) - quad, axis=1)
    logw = log_z_alpha + u
    return np.exp(logw - logsumexp(logw))


def theorem1_bound(model: LogQuadraticModel, alpha: float, cap: int = DEFAULT_STATE_CAP) -> float:
    """``Z exp(-(1 + alpha lambda_min) / (2 alpha))``, the L1 bias bound for DULA."""
    log_z = exact_target(model, cap).log_z
    lam = lambda_min(model)
    proof_form = np.exp(log_z - (1.0 + alpha * lam) / (2.0 * alpha))
    stated_form = np.exp(log_z) * np.exp(-1.0 / (2.0 * alpha) - lam / 2.0)
    if not np.isclose(proof_form, stated_form, rtol=1e-9, atol=0.0):
        raise AssertionError("bound forms disagree")
    return float(proof_form)


@dataclass
class SweepRow:
    alpha: float
    distance: float
    bound: float


def theorem1_sweep(model: LogQuadraticModel, alphas) -> list[SweepRow]:
    target = exact_target(model).probs
    return [SweepRow(float(a), l1_distance(dula_stationary(model, a), target), theorem1_bound(model, a))
            for a in alphas]


@dataclass
class EpsRow:
    eps: float
    alpha: float
    distance: float


@dataclass
class Theorem2Table:
    rows: list[EpsRow]

    @property
    def monotone(self) -> bool:
        """Distances non-decreasing in eps, up to 1e-12 rounding."""
        rows = sorted(self.rows, key=lambda r: r.eps)
        return all(b.distance >= a.distance - 1e-12 for a, b in zip(rows, rows[1:]))


def theorem2_probe(eps_values, a: float, b: float, alpha: float) -> Theorem2Table:
    """Exact DULA bias on the perturbed 1-d model for each ``eps``."""
    rows = []
    for eps in eps_values:
        model = Perturbed1DModel(a, b, eps)
        pi = exact_target(model).probs
        rows.append(EpsRow(float(eps), float(alpha), l1_distance(dula_stationary(model, alpha), pi)))
    return Theorem2Table(rows)


# ---------------------------------------------------------------------------
# dumps
# ---------------------------------------------------------------------------

def write_distribution_csv(dist: ExactDistribution, path, extra: dict[str, np.ndarray] | None = None) -> None:
    extra = extra or {}
    flat = dist.states.reshape(len(dist.states), -1)
    with open(path, "w") as fh:
        fh.write(",".join(["index", "state", "energy", "prob", *extra]) + "\n")
        for k in range(len(flat)):
            state = " ".join(str(int(v)) for v in flat[k])
            cols = [str(k), state, repr(float(dist.energies[k])), repr(float(dist.probs[k]))]
            cols += [repr(float(col[k])) for col in extra.values()]
            fh.write(",".join(cols) + "\n")


def write_kernel_csv(kernel: TransitionKernel, path) -> None:
    np.savetxt(path, kernel.matrix, delimiter=",", fmt="%.17g")
