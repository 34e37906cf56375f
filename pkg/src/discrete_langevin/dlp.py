"""The discrete Langevin proposal.

For each coordinate ``i`` and candidate value ``v`` in ``Theta_i`` the
proposal logit is::

    0.5 * grad_i * (v - x_i) - (v - x_i)**2 / (2 * alpha * g_i**2)

where ``g_i`` is an optional diagonal preconditioner (1 when absent).  Every
term that depends only on the current state is dropped since it cancels in
the per-coordinate softmax.  One-hot coordinates use the vector form
``0.5 * grad_i . (e_v - x_i) - |e_v - x_i|^2 / (2 alpha)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import DiscreteDomain, DomainKind, EnergyModel, InvalidEnergyError, log_softmax

# candidate probabilities below this are treated as exactly zero
PROB_FLOOR = 1e-300
_LOG_FLOOR = np.log(PROB_FLOOR)


@dataclass(frozen=True)
class DlpConfig:
    """Stepsize, optional diagonal preconditioner and gradient source.

    ``stochastic=True`` replaces the gradient with one ``stoch_grad`` draw
    using minibatches of ``batch_size`` (``None`` lets the model decide).
    ``stepsize_term=False`` drops the locality penalty entirely; it exists
    only to show why that penalty matters.
    """

    alpha: float
    precond: tuple[float, ...] | None = None
    stochastic: bool = False
    batch_size: int | None = None
    stepsize_term: bool = True

    def __post_init__(self):
        if not (self.alpha > 0 and np.isfinite(self.alpha)):
            raise ValueError(f"stepsize must be positive, got alpha={self.alpha}")
        if self.precond is not None:
            pre = tuple(float(v) for v in self.precond)
            if not all(v > 0 for v in pre):
                raise ValueError("preconditioner entries must be positive")
            object.__setattr__(self, "precond", pre)
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def penalty_scale(self, dim: int) -> np.ndarray:
        """Per-coordinate ``1 / (2 alpha g_i^2)``, or zeros without the stepsize term."""
        cache = self.__dict__.setdefault("_scale", {})
        if dim not in cache:
            g = np.ones(dim) if self.precond is None else np.asarray(self.precond)
            if g.shape != (dim,):
                raise ValueError(f"preconditioner has length {g.size}, model has {dim} coordinates")
            scale = 1.0 / (2.0 * self.alpha * g**2) if self.stepsize_term else np.zeros(dim)
            scale.setflags(write=False)
            cache[dim] = scale
        return cache[dim]


@dataclass
class Proposal:
    """Independent categorical tables, one per coordinate.

    ``log_probs`` has shape ``(..., d, K)`` where column ``k`` refers to
    ``domain.values()[k]``.
    """

    domain: DiscreteDomain
    x: np.ndarray
    grad: np.ndarray
    log_probs: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)


def dlp_logits(domain: DiscreteDomain, x: np.ndarray, grad: np.ndarray, cfg: DlpConfig) -> np.ndarray:
    """Unnormalized per-coordinate logits, shape ``(..., d, K)``."""
    x = np.asarray(x, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if not np.isfinite(grad).all():
        raise InvalidEnergyError("gradient is not finite")
    scale = cfg.penalty_scale(domain.dim)
    if domain.is_onehot:
        gdot = np.sum(grad * x, axis=-1, keepdims=True)
        return 0.5 * (grad - gdot) - 2.0 * (1.0 - x) * scale[:, None]
    diff = domain.values() - x[..., None]
    return 0.5 * grad[..., None] * diff - diff**2 * scale[:, None]


def _normalize(logits: np.ndarray) -> np.ndarray:
    lp = log_softmax(logits)
    return np.where(lp < _LOG_FLOOR, -np.inf, lp)


def model_gradient(model: EnergyModel, x, cfg: DlpConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    if cfg.stochastic:
        if rng is None:
            raise ValueError("a stochastic gradient needs an rng")
        return model.stoch_grad(x, rng, cfg.batch_size)
    return model.grad(x)


def build_proposal(model: EnergyModel, x, cfg: DlpConfig, rng: np.random.Generator | None = None,
                   grad: np.ndarray | None = None) -> Proposal:
    """Discrete Langevin proposal at ``x``; pass ``grad`` to reuse a cached gradient."""
    x = np.asarray(x, dtype=float)
    if grad is None:
        grad = model_gradient(model, x, cfg, rng)
    logits = dlp_logits(model.domain, x, grad, cfg)
    return Proposal(model.domain, x, np.asarray(grad, dtype=float), _normalize(logits))


def sample_proposal(p: Proposal, rng: np.random.Generator) -> np.ndarray:
    """Draw every coordinate independently by inverse CDF over the table order."""
    cdf = np.cumsum(p.probs, axis=-1)
    u = rng.random(cdf.shape[:-1]) * cdf[..., -1]
    # the last bin catches everything past the final edge, so it needs no comparison
    idx = (cdf[..., :-1] <= u[..., None]).sum(-1)
    return p.domain.from_index(idx)


def sample_flip_proposal(model: EnergyModel, x, cfg: DlpConfig,
                         rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw from the proposal on binary or spin domains without building tables.

    Each coordinate either stays or flips, so one logit per coordinate is
    enough. The floor and the uniform draws match :func:`sample_proposal`.
    """
    dom = model.domain
    x = np.asarray(x, dtype=float)
    grad = np.asarray(model_gradient(model, x, cfg, rng), dtype=float)
    if not np.isfinite(grad).all():
        raise InvalidEnergyError("gradient is not finite")
    step = 1.0 - 2.0 * x if dom.kind is DomainKind.BINARY else -2.0 * x
    logit = 0.5 * grad * step - step * step * cfg.penalty_scale(dom.dim)
    p_flip = expit(logit)
    # log sigmoid(l) and l agree to far below float resolution once l < log(1e-300)
    p_flip[logit < _LOG_FLOOR] = 0.0
    p_flip[logit > -_LOG_FLOOR] = 1.0
    p_first = np.where(dom.to_index(x) == 0, 1.0 - p_flip, p_flip)
    return dom.from_index((rng.random(x.shape) >= p_first).astype(np.intp))


def proposal_logprob(p: Proposal, y) -> np.ndarray:
    """``log q(y | x) = sum_i log q_i(y_i | x)``; ``-inf`` if any coordinate has zero mass."""
    idx = p.domain.to_index(y)
    picked = np.take_along_axis(p.log_probs, idx[..., None], axis=-1)[..., 0]
    return picked.sum(-1)


def binary_flip_probs(model: EnergyModel, x, alpha: float, grad: np.ndarray | None = None) -> np.ndarray:
    """Closed-form flip probability per coordinate for binary and spin domains.

    Binary ``{0,1}``: ``sigmoid(-grad * (2x - 1) / 2 - 1 / (2 alpha))``.
    Spin ``{-1,+1}``: a flip moves by ``-2x``, so the same construction gives
    ``sigmoid(-grad * x - 2 / alpha)``.
    """
    dom = model.domain
    if not dom.is_binary_like:
        raise ValueError("binary_flip_probs needs a binary or spin domain")
    if not alpha > 0:
        raise ValueError(f"stepsize must be positive, got alpha={alpha}")
    x = np.asarray(x, dtype=float)
    g = model.grad(x) if grad is None else np.asarray(grad, dtype=float)
    if dom.kind is DomainKind.BINARY:
        return expit(-0.5 * g * (2.0 * x - 1.0) - 1.0 / (2.0 * alpha))
    return expit(-g * x - 2.0 / alpha)


@dataclass
class StochasticProbeResult:
    alpha: float
    distance: np.ndarray  # per coordinate, |E[q_hat_i] - q_i|_1
    sigma_hat: np.ndarray  # per coordinate RMS deviation of the stochastic gradient
    L_hat: float
    bound: np.ndarray  # 2 sigma_hat_i exp(-1/(2 alpha) + L_hat)

    @property
    def holds(self) -> bool:
        return bool(np.all(self.distance <= self.bound))


def stochastic_proposal_bias_probe(model: EnergyModel, x, alpha: float, n_draws: int,
                                   rng: np.random.Generator, batch_size: int | None = None
                                   ) -> StochasticProbeResult:
    """Compare the averaged stochastic-gradient proposal with the full-batch one.

    ``sigma_hat`` is measured around the exact gradient (not the sample mean)
    and ``L_hat`` is the largest absolute gradient entry seen, full-batch or
    stochastic.
    """
    if model.domain.kind is not DomainKind.BINARY:
        raise ValueError("the stochastic probe is defined on {0,1}^d")
    x = np.asarray(x, dtype=float)
    cfg = DlpConfig(alpha)
    g = model.grad(x)
    q = build_proposal(model, x, cfg, grad=g).probs
    draws = np.stack([model.stoch_grad(x, rng, batch_size) for _ in range(n_draws)])
    q_hat = build_proposal(model, np.broadcast_to(x, draws.shape), cfg, grad=draws).probs
    # average the differences so identical draws give exactly zero
    distance = np.abs((q_hat - q).mean(0)).sum(-1)
    sigma = np.sqrt(np.mean((draws - g) ** 2, axis=0))
    L = float(max(np.abs(draws).max(), np.abs(g).max()))
    bound = 2.0 * sigma * np.exp(-1.0 / (2.0 * alpha) + L)
    return StochasticProbeResult(alpha, distance, sigma, L, bound)
