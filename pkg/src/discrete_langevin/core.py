"""Domains, the energy-model interface and shared numerics.

States are plain numpy arrays.  A scalar-coordinate domain (binary, spin,
integer categorical) stores a state as shape ``(..., d)``; a one-hot domain
stores shape ``(..., d, S)``.  Leading axes are independent chains, so every
model and sampler works on a single state or on a batch of chains alike.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Iterator

import numpy as np

DEFAULT_STATE_CAP = 2**24

# exp(-745) underflows to zero in float64
_UNDERFLOW_GAP = 745.0


class InvalidEnergyError(FloatingPointError):
    """Raised when an energy or gradient produces non-finite numbers."""


class StateSpaceTooLarge(ValueError):
    """Raised when exhaustive enumeration would exceed the configured cap."""


class DomainKind(str, enum.Enum):
    BINARY = "binary"
    SPIN = "spin"
    CATEGORICAL = "categorical"
    ONEHOT = "onehot"


@dataclass(frozen=True)
class DiscreteDomain:
    """A factorized finite domain ``Theta_1 x ... x Theta_d``.

    ``num_categories`` is only meaningful for the categorical and one-hot kinds.
    """

    kind: DomainKind
    dim: int
    num_categories: int = 2

    def __post_init__(self):
        object.__setattr__(self, "kind", DomainKind(self.kind))
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.kind in (DomainKind.CATEGORICAL, DomainKind.ONEHOT):
            if self.num_categories < 2:
                raise ValueError("categorical domains need at least 2 categories")
        elif self.num_categories != 2:
            object.__setattr__(self, "num_categories", 2)

    @classmethod
    def binary(cls, dim: int) -> "DiscreteDomain":
        return cls(DomainKind.BINARY, dim)

    @classmethod
    def spin(cls, dim: int) -> "DiscreteDomain":
        return cls(DomainKind.SPIN, dim)

    @classmethod
    def categorical(cls, dim: int, num_categories: int) -> "DiscreteDomain":
        return cls(DomainKind.CATEGORICAL, dim, num_categories)

    @classmethod
    def onehot(cls, dim: int, num_categories: int) -> "DiscreteDomain":
        return cls(DomainKind.ONEHOT, dim, num_categories)

    @property
    def is_onehot(self) -> bool:
        return self.kind is DomainKind.ONEHOT

    @property
    def is_binary_like(self) -> bool:
        return self.kind in (DomainKind.BINARY, DomainKind.SPIN)

    @property
    def n_values(self) -> int:
        """Number of values a single coordinate can take."""
        return self.num_categories

    @property
    def n_states(self) -> int:
        return self.n_values**self.dim

    @property
    def state_shape(self) -> tuple[int, ...]:
        if self.is_onehot:
            return (self.dim, self.num_categories)
        return (self.dim,)

    def values(self) -> np.ndarray:
        """Per-coordinate candidate values in canonical (lexicographic) order.

        For one-hot domains this is the ``S x S`` identity, one row per category.
        The array is cached and read-only.
        """
        v = self.__dict__.get("_values")
        if v is None:
            if self.kind is DomainKind.BINARY:
                v = np.array([0.0, 1.0])
            elif self.kind is DomainKind.SPIN:
                v = np.array([-1.0, 1.0])
            elif self.kind is DomainKind.CATEGORICAL:
                v = np.arange(self.num_categories, dtype=float)
            else:
                v = np.eye(self.num_categories)
            v.setflags(write=False)
            object.__setattr__(self, "_values", v)
        return v

    def to_index(self, x: np.ndarray) -> np.ndarray:
        """Map coordinate values to their position in :meth:`values`."""
        x = np.asarray(x)
        if self.kind is DomainKind.SPIN:
            return ((x + 1) // 2).astype(np.intp)
        if self.is_onehot:
            return np.argmax(x, axis=-1).astype(np.intp)
        return np.rint(x).astype(np.intp)

    def from_index(self, idx: np.ndarray) -> np.ndarray:
        return self.values()[np.asarray(idx, dtype=np.intp)]

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape[-len(self.state_shape):] != self.state_shape:
            return False
        if self.is_onehot:
            return bool(np.all((x == 0) | (x == 1)) and np.all(x.sum(-1) == 1))
        return bool(np.all(np.isin(x, self.values())))

    def random_state(self, rng: np.random.Generator, batch: tuple[int, ...] | int = ()) -> np.ndarray:
        batch = (batch,) if isinstance(batch, int) else tuple(batch)
        idx = rng.integers(0, self.n_values, size=batch + (self.dim,))
        return self.from_index(idx)

    def hamming(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Number of coordinates at which ``x`` and ``y`` differ."""
        return (self.to_index(x) != self.to_index(y)).sum(-1)

    def describe(self) -> dict:
        out = {"kind": self.kind.value, "dim": self.dim}
        if self.kind in (DomainKind.CATEGORICAL, DomainKind.ONEHOT):
            out["num_categories"] = self.num_categories
        return out


class EnergyModel:
    """Unnormalized log-density ``U`` with a differentiable continuous extension.

    Subclasses implement :meth:`energy` and :meth:`grad` for arrays with
    arbitrary leading batch axes.  Both must accept real-valued inputs, since
    the gradient is that of the declared continuous extension.
    """

    domain: DiscreteDomain

    def energy(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def stoch_grad(self, x: np.ndarray, rng: np.random.Generator, batch_size: int | None = None) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no stochastic gradient")

    @property
    def has_stoch_grad(self) -> bool:
        return type(self).stoch_grad is not EnergyModel.stoch_grad


def make_rng(seed: int | np.random.SeedSequence | np.random.Generator | None) -> np.random.Generator:
    """Seeded PCG64 generator; the same seed always yields the same stream."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """Independent per-chain generators that do not depend on scheduling order."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def stable_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Softmax along ``axis`` after subtracting the maximum.

    Entries more than 745 below the maximum are set to exactly 0.
    """
    logits = np.asarray(logits, dtype=float)
    if logits.size == 0:
        raise ValueError("softmax of an empty vector")
    if not np.isfinite(logits).all():
        raise InvalidEnergyError("non-finite logit; check the energy or its gradient")
    shifted = logits - logits.max(axis=axis, keepdims=True)
    w = np.where(shifted < -_UNDERFLOW_GAP, 0.0, np.exp(shifted))
    return w / w.sum(axis=axis, keepdims=True)


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    logits = np.asarray(logits, dtype=float)
    if not np.isfinite(logits).all():
        raise InvalidEnergyError("non-finite logit; check the energy or its gradient")
    shifted = logits - logits.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def enumerate_states(domain: DiscreteDomain, cap: int = DEFAULT_STATE_CAP) -> Iterator[np.ndarray]:
    """Yield every state of ``domain`` once, in lexicographic coordinate order."""
    _check_cap(domain, cap)
    vals = domain.values()
    for idx in itertools.product(range(domain.n_values), repeat=domain.dim):
        yield vals[list(idx)]


def state_table(domain: DiscreteDomain, cap: int = DEFAULT_STATE_CAP) -> np.ndarray:
    """All states stacked into one array, row ``k`` being the ``k``-th enumerated state."""
    _check_cap(domain, cap)
    s, d = domain.n_values, domain.dim
    k = np.arange(s**d)
    powers = s ** np.arange(d - 1, -1, -1)
    idx = (k[:, None] // powers[None, :]) % s
    return domain.from_index(idx)


def state_index(domain: DiscreteDomain, x: np.ndarray) -> np.ndarray:
    """Position of ``x`` in the enumeration order of :func:`state_table`."""
    idx = domain.to_index(x)
    powers = domain.n_values ** np.arange(domain.dim - 1, -1, -1)
    return idx @ powers


def _check_cap(domain: DiscreteDomain, cap: int) -> None:
    if domain.n_states > cap:
        raise StateSpaceTooLarge(
            f"{domain.n_states} states exceed the enumeration cap {cap}; "
            "use a sampler instead of exact enumeration"
        )


def finite_diff_grad(model: EnergyModel, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of the model's continuous extension at ``x``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        up = model.energy((flat + e).reshape(x.shape))
        dn = model.energy((flat - e).reshape(x.shape))
        gflat[i] = (up - dn) / (2 * h)
    return g
