"""Score predictors: linear x'theta and bias-free ReLU networks.

Network convention: ``weights = [W_0, ..., W_L]`` with ``W_l`` of shape
``(N_{l+1}, N_l)``, ``N_0 = p`` and ``N_{L+1} = 1``.  Hidden layers use ReLU,
the output layer is the identity.  ReLU'(0) is taken as 0.

Solvers work on flat parameter vectors; ``ravel``/``with_flat`` convert.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np


def relu(z):
    return np.maximum(z, 0.0)


@dataclass
class LinearParams:
    theta: np.ndarray

    def __post_init__(self) -> None:
        self.theta = np.asarray(self.theta, dtype=float).ravel()

    @property
    def p(self) -> int:
        return self.theta.size

    @property
    def n_params(self) -> int:
        return self.theta.size

    def ravel(self) -> np.ndarray:
        return self.theta.copy()

    def with_flat(self, vec) -> "LinearParams":
        return LinearParams(np.array(vec, dtype=float))

    def norm(self) -> float:
        return float(np.linalg.norm(self.theta))


@dataclass
class MlpParams:
    weights: List[np.ndarray]

    def __post_init__(self) -> None:
        self.weights = [np.atleast_2d(np.asarray(w, dtype=float)) for w in self.weights]
        for a, b in zip(self.weights[:-1], self.weights[1:]):
            if b.shape[1] != a.shape[0]:
                raise ValueError(f"incompatible layer shapes {a.shape} -> {b.shape}")
        if self.weights[-1].shape[0] != 1:
            raise ValueError("the last weight matrix must have a single output row")

    @property
    def p(self) -> int:
        return self.weights[0].shape[1]

    @property
    def depth(self) -> int:
        """L in W_0..W_L."""
        return len(self.weights) - 1

    @property
    def widths(self) -> tuple:
        return (self.p,) + tuple(w.shape[0] for w in self.weights)

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights)

    def ravel(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.weights])

    def with_flat(self, vec) -> "MlpParams":
        vec = np.asarray(vec, dtype=float)
        out, k = [], 0
        for w in self.weights:
            out.append(vec[k:k + w.size].reshape(w.shape).copy())
            k += w.size
        return MlpParams(out)

    def norm(self) -> float:
        return frobenius(self)

    @classmethod
    def init(cls, widths: Sequence[int], rng) -> "MlpParams":
        """Glorot-uniform weights for the given width schedule (p, ..., 1)."""
        weights = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        return cls(weights)


def simulation_widths(p: int, hidden=(0.6, 0.4)) -> tuple:
    return (p,) + tuple(max(1, math.ceil(h * p - 1e-9)) for h in hidden) + (1,)


def _as_rows(params, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != params.p:
        raise ValueError(f"input dimension {X.shape[1]} != model dimension {params.p}")
    return X, single


def forward(params: MlpParams, X: np.ndarray):
    """Returns pre-activations per layer (rows = samples) and the scores."""
    pre = []
    a = X
    for l, w in enumerate(params.weights):
        z = a @ w.T
        if l < params.depth:
            pre.append(z)
            a = relu(z)
        else:
            a = z
    return pre, a[:, 0]


def predict(params, x):
    """Score for one input vector (returns float) or for each row of a matrix."""
    X, single = _as_rows(params, x)
    if isinstance(params, LinearParams):
        s = X @ params.theta
    else:
        s = forward(params, X)[1]
    return float(s[0]) if single else s


def backward(params, x, upstream):
    """Gradient of sum_i upstream_i * predict(params, x_i) w.r.t. the parameters.

    Returns an object of the same type as ``params`` holding the gradient.
    """
    X, single = _as_rows(params, x)
    g = np.atleast_1d(np.asarray(upstream, dtype=float))
    if g.size != X.shape[0]:
        raise ValueError("upstream must have one entry per input row")
    if isinstance(params, LinearParams):
        return LinearParams(X.T @ g)
    pre, _ = forward(params, X)
    acts = [X] + [relu(z) for z in pre]
    grads = [None] * len(params.weights)
    delta = g[:, None]                      # d out / d z_L, rows = samples
    for l in range(params.depth, -1, -1):
        grads[l] = delta.T @ acts[l]
        if l > 0:
            delta = (delta @ params.weights[l]) * (pre[l - 1] > 0)
    return MlpParams(grads)


def flat_grad(params, X, upstream) -> np.ndarray:
    return backward(params, X, upstream).ravel()


def frobenius(params: MlpParams) -> float:
    return math.sqrt(sum(float(np.sum(w * w)) for w in params.weights))


def spectral_norm(w: np.ndarray, n_iter: int = 50, tol: float = 1e-6, seed: int = 0) -> float:
    """Largest singular value by power iteration on W^T W."""
    w = np.atleast_2d(w)
    if not np.any(w):
        return 0.0
    v = np.random.default_rng(seed).standard_normal(w.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(n_iter):
        u = w @ v
        nu = np.linalg.norm(u)
        if nu == 0:
            break
        v = w.T @ u
        nv = np.linalg.norm(v)
        new = math.sqrt(nv)
        v /= nv
        if abs(new - sigma) <= tol * new:
            sigma = new
            break
        sigma = new
    return sigma


@dataclass
class MlpDiagnostics:
    frobenius: float
    spectral: List[float]
    depth: int
    activation_lipschitz: float = 1.0

    @property
    def spectral_max(self) -> float:
        return max(self.spectral)

    def lipschitz_bound_at(self, x_norm: float) -> float:
        return lipschitz_bound(self, x_norm)


def diagnostics(params: MlpParams, other: Optional[MlpParams] = None) -> MlpDiagnostics:
    """Norm diagnostics; with ``other`` the spectral norms are max'ed pairwise,
    which is what the Lipschitz bound between two parameter sets needs."""
    spec = [spectral_norm(w) for w in params.weights]
    if other is not None:
        spec = [max(a, spectral_norm(w)) for a, w in zip(spec, other.weights)]
    return MlpDiagnostics(frobenius=frobenius(params), spectral=spec, depth=params.depth)


def lipschitz_bound(diag: MlpDiagnostics, x_norm: float) -> float:
    """2 a^L sqrt(L) ||x|| max_l prod_{j != l} sigma_max(W_j).

    L counts W_0..W_L as usual but is floored at 1 so that a single matrix
    (L = 0) still yields a valid bound.
    """
    if x_norm < 0:
        raise ValueError("x_norm must be non-negative")
    L = max(diag.depth, 1)
    s = diag.spectral
    best = 0.0
    for l in range(len(s)):
        prod = 1.0
        for j, sj in enumerate(s):
            if j != l:
                prod *= sj
        best = max(best, prod)
    return 2.0 * diag.activation_lipschitz ** L * math.sqrt(L) * x_norm * best
