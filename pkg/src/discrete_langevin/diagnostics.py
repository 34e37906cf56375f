"""Sample-quality metrics: mean RMSE, effective sample size, flip statistics, MMD."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DiscreteDomain


class MomentAccumulator:
    """Running first moments of recorded states, per coordinate.

    Works as a ``run_chain`` recorder.  Batched states are pooled across
    chains.  ``keep_samples`` additionally stores every recorded state.
    """

    def __init__(self, keep_samples: bool = False):
        self.total = None
        self.count = 0
        self.keep_samples = keep_samples
        self.samples: list[np.ndarray] = []

    def update(self, x: np.ndarray, state_ndim: int = 1) -> None:
        x = np.asarray(x, dtype=float)
        flat = x.reshape((-1,) + x.shape[x.ndim - state_ndim:])
        s = flat.sum(0)
        self.total = s if self.total is None else self.total + s
        self.count += flat.shape[0]
        if self.keep_samples:
            self.samples.append(flat.copy())

    def record(self, step, x, event) -> None:
        self.update(x)

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        out = MomentAccumulator(self.keep_samples and other.keep_samples)
        parts = [t for t in (self.total, other.total) if t is not None]
        out.total = sum(parts) if parts else None
        out.count = self.count + other.count
        out.samples = self.samples + other.samples
        return out

    @property
    def mean(self) -> np.ndarray:
        if not self.count:
            raise ValueError("no samples recorded")
        return self.total / self.count


def mean_rmse(estimated, truth) -> float:
    estimated = np.asarray(estimated, dtype=float).reshape(-1)
    truth = np.asarray(truth, dtype=float).reshape(-1)
    if estimated.shape != truth.shape:
        raise ValueError("length mismatch")
    return float(np.sqrt(np.mean((estimated - truth) ** 2)))


def autocorrelation(series: np.ndarray) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    x = x - x.mean()
    n = len(x)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    return acov / acov[0]


def ess(series) -> float:
    """``N / (1 + 2 sum_k rho_k)`` summing lags ``k >= 1`` while ``rho_k > 0``.

    A constant series has no autocorrelation to speak of and returns ``N``.
    The result is clamped to ``[1, N]``.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 10:
        raise ValueError("need at least 10 samples for an ESS estimate")
    if np.all(x == x[0]):
        return float(n)
    rho = autocorrelation(x)
    s = 0.0
    for k in range(1, n):
        if rho[k] <= 0:
            break
        s += rho[k]
    return float(np.clip(n / (1.0 + 2.0 * s), 1.0, n))


def ess_per_coordinate(samples) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    return np.array([ess(samples[:, i]) for i in range(samples.shape[1])])


# ---------------------------------------------------------------------------
# MMD with the exponentiated Hamming kernel k(x, y) = exp(-H(x, y) / d)
# ---------------------------------------------------------------------------

def _indicator(samples: np.ndarray, domain: DiscreteDomain | None) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    if domain is not None:
        idx = domain.to_index(samples)
        k = domain.n_values
    else:
        vals, idx = np.unique(samples, return_inverse=True)
        idx = idx.reshape(samples.shape)
        k = len(vals)
    n, d = idx.shape
    out = np.zeros((n, d * k))
    out[np.repeat(np.arange(n), d), (np.arange(d) * k)[None, :].repeat(n, 0).reshape(-1) + idx.reshape(-1)] = 1.0
    return out


def hamming_kernel(a, b, domain: DiscreteDomain | None = None) -> np.ndarray:
    """Kernel matrix ``exp(-Hamming(a_i, b_j) / d)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = a.shape[1]
    both = _indicator(np.concatenate([a, b]), domain)
    ea, eb = both[: len(a)], both[len(a):]
    return np.exp(-(d - ea @ eb.T) / d)


def mmd2_hamming(a, b, domain: DiscreteDomain | None = None) -> float:
    """Unbiased MMD^2 estimate between two sample sets."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n, m = len(a), len(b)
    if n < 2 or m < 2:
        raise ValueError("need at least two samples per set")
    K = hamming_kernel(np.concatenate([a, b]), np.concatenate([a, b]), domain)
    return _mmd2_from_kernel(K, n)


def _mmd2_from_kernel(K: np.ndarray, n: int) -> float:
    m = K.shape[0] - n
    kaa, kbb, kab = K[:n, :n], K[n:, n:], K[:n, n:]
    saa = (kaa.sum() - np.trace(kaa)) / (n * (n - 1))
    sbb = (kbb.sum() - np.trace(kbb)) / (m * (m - 1))
    return float(saa + sbb - 2.0 * kab.mean())


def log_mmd(a, b, floor: float = 1e-10, domain: DiscreteDomain | None = None) -> float:
    """``log(max(MMD^2, floor))``; the floor absorbs negative unbiased estimates."""
    return float(np.log(max(mmd2_hamming(a, b, domain), floor)))


@dataclass
class PermutationTest:
    statistic: float
    threshold: float  # (1 - level) quantile of the permutation null
    p_value: float
    null: np.ndarray = field(repr=False)

    @property
    def rejects(self) -> bool:
        return self.statistic > self.threshold


def _mmd2_labelled(K: np.ndarray, z: np.ndarray, diag: np.ndarray) -> float:
    # z is the 0/1 membership of the first set; same estimator as _mmd2_from_kernel
    n = int(z.sum())
    m = len(z) - n
    w = 1.0 - z
    Kz = K @ z
    saa = (z @ Kz - diag @ z) / (n * (n - 1))
    sbb = (w @ (K @ w) - diag @ w) / (m * (m - 1))
    return float(saa + sbb - 2.0 * (w @ Kz) / (n * m))


def mmd_permutation_test(a, b, rng: np.random.Generator, n_perm: int = 200, level: float = 0.05,
                         domain: DiscreteDomain | None = None) -> PermutationTest:
    """Two-sample test on the pooled kernel matrix; the null permutes set labels."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pooled = np.concatenate([a, b])
    K = hamming_kernel(pooled, pooled, domain)
    diag = np.diag(K).copy()
    z = np.zeros(len(pooled))
    z[: len(a)] = 1.0
    stat = _mmd2_labelled(K, z, diag)
    null = np.array([_mmd2_labelled(K, rng.permutation(z), diag) for _ in range(n_perm)])
    threshold = float(np.quantile(null, 1.0 - level))
    p = (1 + np.sum(null >= stat)) / (n_perm + 1)
    return PermutationTest(stat, threshold, float(p), null)


# ---------------------------------------------------------------------------
# flip statistics
# ---------------------------------------------------------------------------

@dataclass
class FlipStats:
    mean_changed: float  # coordinates actually changed per step (0 on rejection)
    mean_proposed: float  # coordinates changed by the proposal, accepted or not
    acceptance: float

    @property
    def changed_per_accept(self) -> float:
        """Coordinates changed per accepted step; ``nan`` if nothing was accepted."""
        return self.mean_changed / self.acceptance if self.acceptance > 0 else float("nan")


def flip_stats(trace) -> FlipStats:
    """Means over the post burn-in steps of a :class:`samplers.Trace`."""
    sl = slice(trace.burn_in, None)
    acc = trace.accepted[sl]
    if acc.size == 0:
        raise ValueError("no post burn-in steps in trace")
    return FlipStats(
        float(trace.n_coords_changed[sl].mean()),
        float(trace.n_coords_proposed[sl].mean()),
        float(acc.mean()),
    )


def empirical_distribution(samples, domain: DiscreteDomain) -> np.ndarray:
    """Histogram of states in enumeration order, normalized."""
    from .core import state_index

    idx = state_index(domain, np.asarray(samples).reshape((-1,) + domain.state_shape))
    counts = np.bincount(idx, minlength=domain.n_states)
    return counts / counts.sum()
