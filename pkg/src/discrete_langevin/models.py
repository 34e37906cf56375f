"""Benchmark energy models.

Every model documents its continuous extension, since the gradient that
drives the proposal is the gradient of that extension and different
extensions of the same discrete energy can give very different samplers.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from scipy.special import expit

from .core import DiscreteDomain, EnergyModel


def softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _flat(x: np.ndarray, domain: DiscreteDomain) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if domain.is_onehot:
        return x.reshape(x.shape[:-2] + (-1,))
    return x


class LogQuadraticModel(EnergyModel):
    """``U(x) = x^T W x + b^T x + offset``.

    The continuous extension is the same polynomial on ``R^d``, so
    ``grad(x) = 2 W x + b``.  A non-symmetric ``W`` is replaced by its
    symmetric part, which leaves the energy unchanged.  For a one-hot domain
    ``W`` acts on the flattened ``d*S`` indicator vector and the gradient is
    returned with shape ``(..., d, S)``.
    """

    def __init__(self, W, b, domain: DiscreteDomain | None = None, offset: float = 0.0):
        W = np.asarray(W, dtype=float)
        b = np.asarray(b, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError(f"W must be square, got shape {W.shape}")
        n = W.shape[0]
        if b.shape != (n,):
            raise ValueError(f"b must have shape ({n},), got {b.shape}")
        if domain is None:
            domain = DiscreteDomain.spin(n)
        width = domain.dim * domain.num_categories if domain.is_onehot else domain.dim
        if width != n:
            raise ValueError(f"W is {n}x{n} but the domain needs {width}")
        self.W = 0.5 * (W + W.T)
        self.b = b
        self.offset = float(offset)
        self.domain = domain

    def energy(self, x):
        z = _flat(x, self.domain)
        return ((z @ self.W) * z).sum(-1) + z @ self.b + self.offset

    def grad(self, x):
        z = _flat(x, self.domain)
        g = 2.0 * z @ self.W + self.b
        return g.reshape(np.shape(x))

    def __repr__(self):
        return f"{type(self).__name__}(d={self.W.shape[0]}, domain={self.domain.kind.value})"


def lattice_adjacency(rows: int, cols: int, periodic: bool = False) -> np.ndarray:
    """0/1 adjacency of a ``rows x cols`` grid in row-major cell order."""
    if rows < 1 or cols < 1:
        raise ValueError("lattice sides must be >= 1")
    d = rows * cols
    J = np.zeros((d, d))
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            for rr, cc in ((r, c + 1), (r + 1, c)):
                if periodic:
                    rr, cc = rr % rows, cc % cols
                elif rr >= rows or cc >= cols:
                    continue
                j = rr * cols + cc
                if j != i:
                    J[i, j] = J[j, i] = 1.0
    return J


class IsingLatticeModel(LogQuadraticModel):
    """Lattice Ising model ``U(s) = a s^T J s + b sum(s)`` on spins ``s``.

    With ``encoding="spin"`` the chain lives on ``{-1, +1}^d`` directly.  With
    ``encoding="binary"`` it lives on ``x in {0, 1}^d`` and the spins are
    ``s = 2x - 1``; the energy is then the quadratic
    ``4a x^T J x + (2b - 4a J 1)^T x + const`` in ``x``, whose gradient is
    taken in ``x``.  Both encodings define the same distribution over spin
    configurations but yield different proposals.
    """

    def __init__(self, rows: int, cols: int, a: float, b: float, periodic: bool = False,
                 encoding: str = "spin"):
        self.rows, self.cols = rows, cols
        self.a, self.bias = float(a), float(b)
        self.periodic = periodic
        self.encoding = encoding
        self.J = lattice_adjacency(rows, cols, periodic)
        d = rows * cols
        M = self.a * self.J
        if encoding == "spin":
            super().__init__(M, np.full(d, self.bias), DiscreteDomain.spin(d))
        elif encoding == "binary":
            ones = np.ones(d)
            super().__init__(
                4.0 * M,
                2.0 * self.bias * ones - 4.0 * M @ ones,
                DiscreteDomain.binary(d),
                offset=ones @ M @ ones - self.bias * d,
            )
        else:
            raise ValueError(f"unknown encoding {encoding!r}; use 'spin' or 'binary'")

    @property
    def n_edges(self) -> int:
        return int(self.J.sum() // 2)

    def spins(self, x):
        x = np.asarray(x, dtype=float)
        return 2.0 * x - 1.0 if self.encoding == "binary" else x


def build_lattice_ising(rows: int, cols: int, a: float, b: float, periodic: bool = False,
                        encoding: str = "spin") -> IsingLatticeModel:
    return IsingLatticeModel(rows, cols, a, b, periodic=periodic, encoding=encoding)


class Perturbed1DModel(EnergyModel):
    """``U(t) = a t^2 + b t + 2 eps sin(pi t / 2)`` on ``t in {-1, +1}``.

    Continuous extension: the same expression on ``R``.  Its derivative
    ``2 a t + b + eps pi cos(pi t / 2)`` is blind to ``eps`` at ``t = +-1``.
    """

    def __init__(self, a: float, b: float, eps: float):
        self.a, self.b, self.eps = float(a), float(b), float(eps)
        self.domain = DiscreteDomain.spin(1)

    def energy(self, x):
        t = np.asarray(x, dtype=float)[..., 0]
        return self.a * t**2 + self.b * t + 2.0 * self.eps * np.sin(t * np.pi / 2)

    def grad(self, x):
        t = np.asarray(x, dtype=float)
        return 2.0 * self.a * t + self.b + self.eps * np.pi * np.cos(t * np.pi / 2)

    def log_quadratic_part(self) -> LogQuadraticModel:
        return LogQuadraticModel([[self.a]], [self.b], self.domain)


class RbmModel(EnergyModel):
    """Marginal RBM energy ``U(x) = sum_j softplus(W x + a)_j + b^T x``.

    ``W`` is ``(n_hidden, n_visible)``, ``a`` the hidden bias, ``b`` the visible
    bias.  The continuous extension is the same formula on ``R^v``, giving
    ``grad(x) = W^T sigmoid(W x + a) + b``.
    """

    def __init__(self, W, a, b):
        self.W = np.asarray(W, dtype=float)
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        h, v = self.W.shape
        if self.a.shape != (h,) or self.b.shape != (v,):
            raise ValueError("bias shapes do not match W")
        self.domain = DiscreteDomain.binary(v)

    @property
    def n_hidden(self) -> int:
        return self.W.shape[0]

    @property
    def n_visible(self) -> int:
        return self.W.shape[1]

    def energy(self, x):
        x = np.asarray(x, dtype=float)
        return softplus(x @ self.W.T + self.a).sum(-1) + x @ self.b

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        return expit(x @ self.W.T + self.a) @ self.W + self.b

    def joint_energy(self, x, h):
        """``h^T W x + a^T h + b^T x``; summing ``exp`` over ``h`` gives ``exp(energy(x))``."""
        x = np.asarray(x, dtype=float)
        h = np.asarray(h, dtype=float)
        return np.sum((x @ self.W.T) * h, -1) + h @ self.a + x @ self.b

    def hidden_probs(self, x):
        """``p(h_j = 1 | x) = sigmoid(W x + a)_j``."""
        return expit(np.asarray(x, dtype=float) @ self.W.T + self.a)

    def visible_probs(self, h):
        """``p(x_i = 1 | h) = sigmoid(W^T h + b)_i``."""
        return expit(np.asarray(h, dtype=float) @ self.W + self.b)


def rbm_conditionals(model: RbmModel, x=None, h=None) -> np.ndarray:
    """Bernoulli parameters of ``p(h | x)`` (pass ``x``) or ``p(x | h)`` (pass ``h``)."""
    if (x is None) == (h is None):
        raise ValueError("pass exactly one of x or h")
    return model.hidden_probs(x) if x is not None else model.visible_probs(h)


def random_rbm(n_visible: int, n_hidden: int, scale: float = 0.1,
               rng: np.random.Generator | int | None = 0, bias_scale: float = 0.0,
               visible_bias: float = 0.0, hidden_bias: float = 0.0) -> RbmModel:
    """Gaussian weights with standard deviation ``scale``.

    Biases are ``N(0, bias_scale^2)`` draws (zero when ``bias_scale`` is 0)
    plus the constant offsets ``visible_bias`` and ``hidden_bias``.  A
    negative ``visible_bias`` gives sparse, mostly-off visibles.
    """
    rng = np.random.default_rng(rng)
    W = rng.normal(0.0, scale, size=(n_hidden, n_visible))
    a = rng.normal(0.0, bias_scale, size=n_hidden) if bias_scale else np.zeros(n_hidden)
    b = rng.normal(0.0, bias_scale, size=n_visible) if bias_scale else np.zeros(n_visible)
    return RbmModel(W, a + hidden_bias, b + visible_bias)


def train_rbm_cd(data: np.ndarray, n_hidden: int, n_epochs: int = 10, lr: float = 0.05,
                 k: int = 1, batch_size: int = 64, rng: np.random.Generator | int | None = 0,
                 init_scale: float = 0.01) -> RbmModel:
    """Fit a small RBM to binary ``data`` with CD-k and plain SGD."""
    rng = np.random.default_rng(rng)
    data = np.asarray(data, dtype=float)
    n, v = data.shape
    W = rng.normal(0.0, init_scale, size=(n_hidden, v))
    a = np.zeros(n_hidden)
    mean = data.mean(0).clip(1e-3, 1 - 1e-3)
    b = np.log(mean / (1 - mean))
    for _ in range(n_epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            x0 = data[order[start:start + batch_size]]
            ph0 = expit(x0 @ W.T + a)
            xk = x0
            for _ in range(k):
                hk = (rng.random(ph0.shape) < expit(xk @ W.T + a)).astype(float)
                xk = (rng.random(x0.shape) < expit(hk @ W + b)).astype(float)
            phk = expit(xk @ W.T + a)
            m = len(x0)
            W += lr * (ph0.T @ x0 - phk.T @ xk) / m
            a += lr * (ph0 - phk).mean(0)
            b += lr * (x0 - xk).mean(0)
    return RbmModel(W, a, b)


class NoisyGradientModel(EnergyModel):
    """Wraps a model and adds bounded zero-mean noise to its gradient.

    The noise is uniform on ``[-sqrt(3) s, sqrt(3) s]`` per coordinate, so it
    has standard deviation ``s`` and the stochastic gradient stays bounded.
    """

    def __init__(self, base: EnergyModel, noise_scale: float):
        if noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")
        self.base = base
        self.noise_scale = float(noise_scale)
        self.domain = base.domain

    def energy(self, x):
        return self.base.energy(x)

    def grad(self, x):
        return self.base.grad(x)

    def stoch_grad(self, x, rng, batch_size=None):
        g = self.base.grad(x)
        if self.noise_scale == 0.0:
            return g
        half = np.sqrt(3.0) * self.noise_scale
        return g + rng.uniform(-half, half, size=g.shape)


class DataSumModel(EnergyModel):
    """``U(x) = x^T W x + sum_n c_n^T x`` over ``N`` data terms ``c_n``.

    The stochastic gradient uses a minibatch of ``batch_size`` terms drawn
    without replacement and rescaled by ``N / batch_size``; with the full
    batch it equals the exact gradient.
    """

    def __init__(self, W, C, domain: DiscreteDomain | None = None):
        self.C = np.asarray(C, dtype=float)
        self._quad = LogQuadraticModel(W, self.C.sum(0), domain or DiscreteDomain.binary(self.C.shape[1]))
        self.domain = self._quad.domain

    @property
    def n_data(self) -> int:
        return self.C.shape[0]

    def energy(self, x):
        return self._quad.energy(x)

    def grad(self, x):
        return self._quad.grad(x)

    def stoch_grad(self, x, rng, batch_size=None):
        n = self.n_data
        if batch_size is None or batch_size >= n:
            return self.grad(x)
        rows = rng.choice(n, size=batch_size, replace=False)
        x = np.asarray(x, dtype=float)
        return 2.0 * x @ self._quad.W + (n / batch_size) * self.C[rows].sum(0)


def lambda_min(model_or_W) -> float:
    """Smallest eigenvalue of the (symmetrized) quadratic coefficient."""
    W = model_or_W.W if hasattr(model_or_W, "W") else np.asarray(model_or_W, dtype=float)
    W = 0.5 * (W + W.T)
    n = W.shape[0]
    if n <= 512:
        return float(np.linalg.eigvalsh(W)[0])
    from scipy.sparse.linalg import eigsh

    return float(eigsh(W, k=1, which="SA", tol=1e-9, return_eigenvectors=False)[0])


# ---------------------------------------------------------------------------
# matrix files
#
# text:   first line "rows cols", then one row of values per line
# binary: b"DLPM", uint32 rows, uint32 cols, then float64 little-endian row-major
# ---------------------------------------------------------------------------

_MAGIC = b"DLPM"


def save_matrix(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    path = Path(path)
    if path.suffix == ".txt":
        with path.open("w") as fh:
            fh.write(f"{M.shape[0]} {M.shape[1]}\n")
            for row in M:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
    else:
        with path.open("wb") as fh:
            fh.write(_MAGIC + struct.pack("<II", *M.shape))
            fh.write(M.astype("<f8").tobytes(order="C"))


def load_matrix(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".txt":
        lines = path.read_text().split("\n", 1)
        rows, cols = (int(t) for t in lines[0].split())
        vals = np.array(lines[1].split(), dtype=float) if len(lines) > 1 else np.empty(0)
        if vals.size != rows * cols:
            raise ValueError(f"{path}: header says {rows}x{cols} but found {vals.size} values")
        return vals.reshape(rows, cols)
    raw = path.read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a matrix file (bad magic)")
    rows, cols = struct.unpack("<II", raw[4:12])
    vals = np.frombuffer(raw[12:], dtype="<f8")
    if vals.size != rows * cols:
        raise ValueError(f"{path}: truncated matrix file")
    return vals.reshape(rows, cols).copy()


def save_rbm(prefix, model: RbmModel) -> None:
    prefix = Path(prefix)
    save_matrix(prefix.with_name(prefix.name + "_W.txt"), model.W)
    save_matrix(prefix.with_name(prefix.name + "_a.txt"), model.a[None, :])
    save_matrix(prefix.with_name(prefix.name + "_b.txt"), model.b[None, :])


def load_rbm(prefix) -> RbmModel:
    prefix = Path(prefix)
    W = load_matrix(prefix.with_name(prefix.name + "_W.txt"))
    a = load_matrix(prefix.with_name(prefix.name + "_a.txt"))[0]
    b = load_matrix(prefix.with_name(prefix.name + "_b.txt"))[0]
    return RbmModel(W, a, b)
