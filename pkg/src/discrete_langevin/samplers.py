"""Chain drivers.

Every sampler exposes ``step(model, x, rng) -> (x_new, StepEvent)``.  ``x`` may
carry leading batch axes (independent chains); the event fields then carry
the same batch shape.
"""

from __future__ import annotations

import hashlib
import struct
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .core import DiscreteDomain, DomainKind, EnergyModel, log_softmax, make_rng
from .dlp import DlpConfig, build_proposal, proposal_logprob, sample_flip_proposal, sample_proposal
from .models import RbmModel


@dataclass
class StepEvent:
    proposed: np.ndarray
    accepted: np.ndarray
    n_coords_changed: np.ndarray  # Hamming distance between pre- and post-step states
    n_coords_proposed: np.ndarray  # Hamming distance between the state and the proposal
    log_accept_ratio: np.ndarray  # nan for samplers without an MH step
    energy_after: np.ndarray


def _batch_shape(domain: DiscreteDomain, x: np.ndarray) -> tuple[int, ...]:
    return x.shape[: x.ndim - len(domain.state_shape)]


def _expand(mask: np.ndarray, domain: DiscreteDomain) -> np.ndarray:
    return mask.reshape(mask.shape + (1,) * len(domain.state_shape))


def _mh(domain, x, y, u_x, u_y, log_fwd, log_rev, rng):
    log_ratio = u_y - u_x + log_rev - log_fwd
    accept = np.log(rng.random(np.shape(log_ratio))) < log_ratio
    x_new = np.where(_expand(accept, domain), y, x)
    u_new = np.where(accept, u_y, u_x)
    ev = StepEvent(
        proposed=y,
        accepted=accept,
        n_coords_changed=np.where(accept, domain.hamming(x, y), 0),
        n_coords_proposed=domain.hamming(x, y),
        log_accept_ratio=log_ratio,
        energy_after=u_new,
    )
    return x_new, ev, accept


# ---------------------------------------------------------------------------
# DLP samplers
# ---------------------------------------------------------------------------

def step_dula(model: EnergyModel, x, cfg: DlpConfig, rng: np.random.Generator):
    """One unadjusted step: draw from the proposal and always move."""
    x = np.asarray(x, dtype=float)
    if model.domain.is_binary_like:
        y = sample_flip_proposal(model, x, cfg, rng)
    else:
        y = sample_proposal(build_proposal(model, x, cfg, rng), rng)
    n = model.domain.hamming(x, y)
    ev = StepEvent(
        proposed=y,
        accepted=np.ones(n.shape, dtype=bool),
        n_coords_changed=n,
        n_coords_proposed=n,
        log_accept_ratio=np.full(n.shape, np.nan),
        energy_after=model.energy(y),
    )
    return y, ev


def _dmala(model, x, u_x, g_x, cfg, rng):
    if cfg.stochastic:
        raise ValueError("the MH-corrected sampler needs exact gradients; use DULA for stochastic gradients")
    p_fwd = build_proposal(model, x, cfg, grad=g_x)
    y = sample_proposal(p_fwd, rng)
    u_y = model.energy(y)
    g_y = model.grad(y)
    p_rev = build_proposal(model, y, cfg, grad=g_y)
    x_new, ev, acc = _mh(model.domain, x, y, u_x, u_y, proposal_logprob(p_fwd, y), proposal_logprob(p_rev, x), rng)
    g_new = np.where(_expand(acc, model.domain), g_y, g_x)
    return x_new, ev, g_new


def step_dmala(model: EnergyModel, x, cfg: DlpConfig, rng: np.random.Generator):
    """One Metropolis-adjusted step with the DLP proposal."""
    x = np.asarray(x, dtype=float)
    x_new, ev, _ = _dmala(model, x, model.energy(x), model.grad(x), cfg, rng)
    return x_new, ev


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------

def _flatten_batch(domain, x):
    batch = _batch_shape(domain, x)
    return x.reshape((-1,) + domain.state_shape), batch


def step_gibbs1(model: EnergyModel, x, rng: np.random.Generator, coord=None):
    """Resample one coordinate from its exact conditional.

    ``coord`` is an int shared by all chains or an array with one index per
    chain; ``None`` picks a uniformly random coordinate per chain.
    """
    dom = model.domain
    x = np.asarray(x, dtype=float)
    xb, batch = _flatten_batch(dom, x)
    B, K = xb.shape[0], dom.n_values
    if coord is None:
        coords = rng.integers(0, dom.dim, size=B)
    else:
        coords = np.broadcast_to(np.asarray(coord, dtype=np.intp).reshape(-1), (B,))
    cand = np.repeat(xb[:, None], K, axis=1)
    rows = np.arange(B)[:, None]
    cand[rows, np.arange(K)[None, :], coords[:, None]] = dom.values()[None]
    u = model.energy(cand)
    lp = log_softmax(u)
    cdf = np.cumsum(np.exp(lp), axis=-1)
    cdf /= cdf[:, -1:]
    k = np.sum(cdf <= rng.random(B)[:, None], axis=-1)
    y = cand[np.arange(B), k]
    cur = dom.to_index(xb)[np.arange(B), coords]
    changed = (k != cur).astype(int)
    ev = StepEvent(
        proposed=y.reshape(x.shape),
        accepted=np.ones(batch, dtype=bool),
        n_coords_changed=changed.reshape(batch),
        n_coords_proposed=changed.reshape(batch),
        log_accept_ratio=np.full(batch, np.nan),
        energy_after=u[np.arange(B), k].reshape(batch),
    )
    return y.reshape(x.shape), ev


def hamming_ball(domain: DiscreteDomain, x: np.ndarray, include_self: bool):
    """All states within Hamming distance 1 of each row of ``x``.

    Returns ``(neighbors, sq_dist, valid)`` with shapes ``(B, N, *state)``,
    ``(B, N)`` and ``(B, N)``.  Neighbor ``i*K + k`` sets coordinate ``i`` to
    value ``k``; entries equal to ``x`` itself are marked invalid, and when
    ``include_self`` a final explicit self entry is appended.
    """
    B = x.shape[0]
    d, K = domain.dim, domain.n_values
    vals = domain.values()
    nb = np.repeat(x[:, None], d * K, axis=1)
    i_idx = np.repeat(np.arange(d), K)
    k_idx = np.tile(np.arange(K), d)
    nb[:, np.arange(d * K), i_idx] = vals[k_idx][None]
    cur = domain.to_index(x)
    valid = cur[:, i_idx] != k_idx[None, :]
    if domain.is_onehot:
        sq = np.full((B, d * K), 2.0)
    else:
        sq = (vals[k_idx][None, :] - x[:, i_idx]) ** 2
    if include_self:
        nb = np.concatenate([nb, x[:, None]], axis=1)
        sq = np.concatenate([sq, np.zeros((B, 1))], axis=1)
        valid = np.concatenate([valid, np.ones((B, 1), dtype=bool)], axis=1)
    return nb, sq, valid


def lb1_log_probs(model: EnergyModel, x: np.ndarray, alpha: float | None):
    """Locally-balanced proposal over the Hamming-1 ball of each row of ``x``.

    Logits ``U(y)/2 - U(x)/2 - |y - x|^2 / (2 alpha)``; with ``alpha=None`` the
    distance term is dropped and the current state is excluded.
    """
    dom = model.domain
    nb, sq, valid = hamming_ball(dom, x, include_self=alpha is not None)
    u_nb = model.energy(nb)
    u_x = model.energy(x)
    logits = 0.5 * (u_nb - u_x[:, None])
    if alpha is not None:
        logits = logits - sq / (2.0 * alpha)
    logits = np.where(valid, logits, -np.inf)
    m = logits.max(-1, keepdims=True)
    lp = logits - m - np.log(np.exp(logits - m).sum(-1, keepdims=True))
    return nb, lp, u_nb, u_x


def _ball_position(domain, x, y, include_self):
    """Index of ``y`` inside ``hamming_ball(x)``; assumes Hamming(x, y) <= 1."""
    xi, yi = domain.to_index(x), domain.to_index(y)
    diff = xi != yi
    moved = diff.any(-1)
    i = np.argmax(diff, axis=-1)
    pos = i * domain.n_values + yi[np.arange(len(yi)), i]
    if include_self:
        pos = np.where(moved, pos, domain.dim * domain.n_values)
    return pos


def step_lb1(model: EnergyModel, x, alpha: float | None, rng: np.random.Generator):
    """Locally-balanced Hamming-1 proposal followed by an MH correction."""
    dom = model.domain
    x = np.asarray(x, dtype=float)
    xb, batch = _flatten_batch(dom, x)
    B = xb.shape[0]
    rows = np.arange(B)
    nb, lp, u_nb, u_x = lb1_log_probs(model, xb, alpha)
    cdf = np.cumsum(np.exp(lp), -1)
    cdf /= cdf[:, -1:]
    j = np.sum(cdf <= rng.random(B)[:, None], axis=-1)
    y = nb[rows, j]
    u_y = u_nb[rows, j]
    _, lp_rev, _, _ = lb1_log_probs(model, y, alpha)
    back = _ball_position(dom, y, xb, alpha is not None)
    x_new, ev, _ = _mh(dom, xb, y, u_x, u_y, lp[rows, j], lp_rev[rows, back], rng)
    return x_new.reshape(x.shape), _reshape_event(ev, batch, x.shape)


def _reshape_event(ev: StepEvent, batch, state_shape):
    return StepEvent(
        proposed=ev.proposed.reshape(state_shape),
        accepted=ev.accepted.reshape(batch),
        n_coords_changed=ev.n_coords_changed.reshape(batch),
        n_coords_proposed=ev.n_coords_proposed.reshape(batch),
        log_accept_ratio=ev.log_accept_ratio.reshape(batch),
        energy_after=ev.energy_after.reshape(batch),
    )


def flip_deltas(domain: DiscreteDomain, x: np.ndarray) -> np.ndarray:
    """Change in each coordinate when it alone is flipped."""
    if domain.kind is DomainKind.BINARY:
        return 1.0 - 2.0 * x
    if domain.kind is DomainKind.SPIN:
        return -2.0 * x
    raise ValueError("single-flip proposals need a binary or spin domain")


def gradflip_log_probs(model: EnergyModel, x: np.ndarray, grad: np.ndarray | None = None) -> np.ndarray:
    """Softmax over single flips of the first-order estimate of ``(U(y) - U(x)) / 2``."""
    g = model.grad(x) if grad is None else grad
    return log_softmax(0.5 * g * flip_deltas(model.domain, x))


def step_gradflip1(model: EnergyModel, x, rng: np.random.Generator):
    """Gradient-informed single-flip proposal with MH (a simplified Gibbs-with-gradients)."""
    dom = model.domain
    x = np.asarray(x, dtype=float)
    xb, batch = _flatten_batch(dom, x)
    B = xb.shape[0]
    rows = np.arange(B)
    lp = gradflip_log_probs(model, xb)
    cdf = np.cumsum(np.exp(lp), -1)
    cdf /= cdf[:, -1:]
    i = np.sum(cdf <= rng.random(B)[:, None], axis=-1)
    y = xb.copy()
    y[rows, i] += flip_deltas(dom, xb)[rows, i]
    lp_rev = gradflip_log_probs(model, y)
    x_new, ev, _ = _mh(dom, xb, y, model.energy(xb), model.energy(y), lp[rows, i], lp_rev[rows, i], rng)
    return x_new.reshape(x.shape), _reshape_event(ev, batch, x.shape)


def step_rbm_block_gibbs(model: RbmModel, x, rng: np.random.Generator):
    """``h ~ p(h | x)`` then ``x' ~ p(x | h)``."""
    if not isinstance(model, RbmModel):
        raise TypeError("block Gibbs needs an RbmModel")
    x = np.asarray(x, dtype=float)
    ph = model.hidden_probs(x)
    h = (rng.random(ph.shape) < ph).astype(float)
    px = model.visible_probs(h)
    y = (rng.random(px.shape) < px).astype(float)
    n = model.domain.hamming(x, y)
    ev = StepEvent(
        proposed=y,
        accepted=np.ones(n.shape, dtype=bool),
        n_coords_changed=n,
        n_coords_proposed=n,
        log_accept_ratio=np.full(n.shape, np.nan),
        energy_after=model.energy(y),
    )
    return y, ev


# ---------------------------------------------------------------------------
# sampler objects
# ---------------------------------------------------------------------------

class Sampler:
    name = "sampler"
    exact = True  # stationary distribution equals the target

    def step(self, model: EnergyModel, x, rng: np.random.Generator):
        raise NotImplementedError

    def reset(self):
        pass

    def describe(self) -> dict:
        return {"kind": self.name}


class DULA(Sampler):
    name = "dula"
    exact = False

    def __init__(self, cfg: DlpConfig | float):
        self.cfg = cfg if isinstance(cfg, DlpConfig) else DlpConfig(float(cfg))

    def step(self, model, x, rng):
        return step_dula(model, x, self.cfg, rng)

    def describe(self):
        return {"kind": self.name, "alpha": self.cfg.alpha}


class DMALA(Sampler):
    """MH-corrected DLP.  Energy and gradient of the returned state are cached,
    so a chain costs one new gradient and one new energy per step."""

    name = "dmala"

    def __init__(self, cfg: DlpConfig | float):
        self.cfg = cfg if isinstance(cfg, DlpConfig) else DlpConfig(float(cfg))
        if self.cfg.stochastic:
            raise ValueError("DMALA does not support stochastic gradients")
        self._cache = None

    def reset(self):
        self._cache = None

    def step(self, model, x, rng):
        if self._cache is not None and self._cache[0] is x and self._cache[1] is model:
            u_x, g_x = self._cache[2], self._cache[3]
        else:
            x = np.asarray(x, dtype=float)
            u_x, g_x = model.energy(x), model.grad(x)
        x_new, ev, g_new = _dmala(model, x, u_x, g_x, self.cfg, rng)
        self._cache = (x_new, model, ev.energy_after, g_new)
        return x_new, ev

    def describe(self):
        return {"kind": self.name, "alpha": self.cfg.alpha}


class Gibbs1(Sampler):
    """Single-site Gibbs.  One step updates one coordinate; ``order`` is
    ``"systematic"`` (cycle through coordinates) or ``"random"``."""

    name = "gibbs1"

    def __init__(self, order: str = "systematic"):
        if order not in ("systematic", "random"):
            raise ValueError(f"unknown coordinate order {order!r}")
        self.order = order
        self._next = 0

    def reset(self):
        self._next = 0

    def step(self, model, x, rng):
        if self.order == "random":
            return step_gibbs1(model, x, rng)
        i = self._next
        self._next = (i + 1) % model.domain.dim
        return step_gibbs1(model, x, rng, coord=i)

    def describe(self):
        return {"kind": self.name, "order": self.order}


class LB1(Sampler):
    name = "lb1"

    def __init__(self, alpha: float | None = None):
        if alpha is not None and not alpha > 0:
            raise ValueError(f"stepsize must be positive, got alpha={alpha}")
        self.alpha = alpha

    def step(self, model, x, rng):
        return step_lb1(model, x, self.alpha, rng)

    def describe(self):
        return {"kind": self.name, "alpha": self.alpha}


class GradFlip1(Sampler):
    name = "gradflip1"

    def step(self, model, x, rng):
        return step_gradflip1(model, x, rng)


class RbmBlockGibbs(Sampler):
    name = "rbm_block_gibbs"

    def step(self, model, x, rng):
        return step_rbm_block_gibbs(model, x, rng)


SAMPLER_KINDS = {
    "dula": DULA,
    "dmala": DMALA,
    "gibbs1": Gibbs1,
    "lb1": LB1,
    "gradflip1": GradFlip1,
    "rbm_block_gibbs": RbmBlockGibbs,
}


def make_sampler(kind: str, **params) -> Sampler:
    """Build a sampler by name.  DLP samplers take ``alpha`` plus optional
    ``precond``, ``stochastic``, ``batch_size`` and ``stepsize_term``."""
    if kind not in SAMPLER_KINDS:
        raise ValueError(f"unknown sampler {kind!r}; valid kinds: {', '.join(SAMPLER_KINDS)}")
    if kind in ("dula", "dmala"):
        return SAMPLER_KINDS[kind](DlpConfig(**params))
    return SAMPLER_KINDS[kind](**params)


# ---------------------------------------------------------------------------
# chains
# ---------------------------------------------------------------------------

class Recorder(Protocol):
    def record(self, step: int, x: np.ndarray, event: StepEvent) -> None: ...


@dataclass
class Trace:
    """Per-step statistics of a run plus the recorded (post burn-in, thinned) samples.

    Event arrays have shape ``(n_steps, *batch)``; ``samples`` has shape
    ``(n_recorded, *batch, *state)`` or is ``None``.
    """

    sampler: str
    burn_in: int
    thin: int
    energy: np.ndarray
    accepted: np.ndarray
    n_coords_changed: np.ndarray
    n_coords_proposed: np.ndarray
    step_times: np.ndarray
    recorded_steps: np.ndarray
    samples: np.ndarray | None
    final_state: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.energy)

    @property
    def wall_time(self) -> float:
        return float(self.step_times.sum())

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.energy, self.accepted, self.n_coords_changed, self.n_coords_proposed,
                    self.recorded_steps, self.final_state):
            h.update(np.ascontiguousarray(arr).tobytes())
        if self.samples is not None:
            h.update(np.ascontiguousarray(self.samples).tobytes())
        return h.hexdigest()


def run_chain(model: EnergyModel, sampler: Sampler, x0, n_steps: int, burn_in: int | None = None,
              thin: int = 1, rng: np.random.Generator | int | None = None,
              recorders: Sequence[Recorder] = (), store_samples: bool = True) -> Trace:
    """Apply ``sampler.step`` ``n_steps`` times from ``x0``.

    Steps ``burn_in, burn_in + thin, ...`` (0-based, after the step) are
    passed to ``recorders`` and stored when ``store_samples``.  ``burn_in``
    defaults to 10% of ``n_steps``.
    """
    if burn_in is None:
        burn_in = n_steps // 10
    if not n_steps >= burn_in >= 0:
        raise ValueError("need n_steps >= burn_in >= 0")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    rng = make_rng(rng)
    sampler.reset()
    x = np.asarray(x0, dtype=float)
    batch = _batch_shape(model.domain, x)
    energy = np.empty((n_steps,) + batch)
    accepted = np.empty((n_steps,) + batch, dtype=bool)
    changed = np.empty((n_steps,) + batch, dtype=np.int64)
    proposed = np.empty((n_steps,) + batch, dtype=np.int64)
    times = np.empty(n_steps)
    samples, rec_steps = [], []
    for t in range(n_steps):
        t0 = time.perf_counter()
        x, ev = sampler.step(model, x, rng)
        times[t] = time.perf_counter() - t0
        energy[t] = ev.energy_after
        accepted[t] = ev.accepted
        changed[t] = ev.n_coords_changed
        proposed[t] = ev.n_coords_proposed
        if t >= burn_in and (t - burn_in) % thin == 0:
            rec_steps.append(t)
            if store_samples:
                samples.append(x)
            for r in recorders:
                r.record(t, x, ev)
    return Trace(
        sampler=sampler.name,
        burn_in=burn_in,
        thin=thin,
        energy=energy,
        accepted=accepted,
        n_coords_changed=changed,
        n_coords_proposed=proposed,
        step_times=times,
        recorded_steps=np.asarray(rec_steps, dtype=np.int64),
        samples=np.stack(samples) if store_samples and samples else None,
        final_state=x,
    )


# ---------------------------------------------------------------------------
# trace files
#
# CSV: step,chain,energy,accepted,coords_changed,coords_proposed
#      one row per recorded step and chain
# binary samples: b"DLPS", uint32 values-per-sample, uint64 count,
#      uint8 value width in bytes (1 or 2), then signed little-endian ints
# ---------------------------------------------------------------------------

def write_trace_csv(trace: Trace, path) -> None:
    steps = trace.recorded_steps
    e = trace.energy[steps].reshape(len(steps), -1)
    a = trace.accepted[steps].reshape(len(steps), -1)
    c = trace.n_coords_changed[steps].reshape(len(steps), -1)
    p = trace.n_coords_proposed[steps].reshape(len(steps), -1)
    with open(path, "w") as fh:
        fh.write("step,chain,energy,accepted,coords_changed,coords_proposed\n")
        for r, t in enumerate(steps):
            for ch in range(e.shape[1]):
                fh.write(f"{t},{ch},{float(e[r, ch])!r},{int(a[r, ch])},{c[r, ch]},{p[r, ch]}\n")


_SAMPLE_MAGIC = b"DLPS"


def write_samples_binary(samples, path) -> None:
    samples = np.asarray(samples)
    flat = samples.reshape(len(samples), -1) if samples.ndim > 1 else samples.reshape(-1, 1)
    ints = np.rint(flat).astype(np.int64)
    width = 1 if ints.min(initial=0) >= -128 and ints.max(initial=0) <= 127 else 2
    dtype = "<i1" if width == 1 else "<i2"
    with open(path, "wb") as fh:
        fh.write(_SAMPLE_MAGIC + struct.pack("<IQB", flat.shape[1], flat.shape[0], width))
        fh.write(ints.astype(dtype).tobytes(order="C"))


def read_samples_binary(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != _SAMPLE_MAGIC:
        raise ValueError(f"{path}: not a sample dump (bad magic)")
    d, count, width = struct.unpack("<IQB", raw[4:17])
    dtype = "<i1" if width == 1 else "<i2"
    vals = np.frombuffer(raw[17:], dtype=dtype)
    if vals.size != d * count:
        raise ValueError(f"{path}: truncated sample dump")
    return vals.reshape(count, d).astype(float)
