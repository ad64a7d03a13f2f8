"""Seeded synthetic data: contaminated Gaussian designs and GLM/QR responses."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm

NB_LOG_MEAN_CAP = 30.0


@dataclass(frozen=True)
class NoiseSpec:
    """kind: ``none`` | ``pareto`` (beta) | ``uniform`` (lo, hi, psi) | ``gaussian``
    (mu, sigma, proportion)."""

    kind: str = "none"
    beta: float = 2.01
    lo: float = 10.0
    hi: float = 20.0
    psi: float = 0.3
    mu: float = 0.0
    sigma: float = 1.0
    proportion: float = 0.2
    per_row_mask: bool = False

    def __post_init__(self) -> None:
        if self.kind not in ("none", "pareto", "uniform", "gaussian"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "pareto" and not self.beta > 1:
            raise ValueError("Pareto shape must exceed 1")
        if self.kind == "uniform":
            if not self.lo < self.hi:
                raise ValueError("uniform noise needs lo < hi")
            if not (0 <= self.psi <= 1):
                raise ValueError("mask probability must lie in [0, 1]")
        if self.kind == "gaussian":
            if not (0 < self.proportion < 1) or self.sigma <= 0:
                raise ValueError("gaussian noise needs 0 < proportion < 1 and sigma > 0")

    @property
    def level(self) -> float:
        """The headline parameter (beta or psi) used in reports."""
        if self.kind == "pareto":
            return self.beta
        if self.kind == "uniform":
            return self.psi
        if self.kind == "gaussian":
            return self.proportion
        return 0.0


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    theta_star: Optional[np.ndarray] = None
    X_clean: Optional[np.ndarray] = None
    latent: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.size:
            raise ValueError("X must be n x p with one response per row")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        pick = lambda a: None if a is None else a[idx]
        return Dataset(self.X[idx], self.y[idx], self.theta_star, pick(self.X_clean),
                       pick(self.latent), dict(self.meta))


def sample_pareto(beta: float, size, rng) -> np.ndarray:
    """Scale-1 Pareto draws (support [1, inf)) by inverse CDF."""
    if not beta > 1:
        raise ValueError("Pareto shape must exceed 1 (finite mean)")
    u = rng.random(size)
    return (1.0 - u) ** (-1.0 / beta)


def gen_noise(n: int, p: int, noise: NoiseSpec, rng) -> np.ndarray:
    if noise.kind == "none":
        return np.zeros((n, p))
    if noise.kind == "pareto":
        return sample_pareto(noise.beta, (n, p), rng)
    if noise.kind == "uniform":
        raw = rng.uniform(noise.lo, noise.hi, size=(n, p))
        if noise.per_row_mask:
            mask = rng.random((n, p)) < noise.psi
        else:
            # one diagonal mask Z shared by every row of the replication
            mask = np.broadcast_to(rng.random(p) < noise.psi, (n, p))
        return raw * mask
    rows = rng.random(n) < noise.proportion
    return rng.normal(noise.mu, noise.sigma, size=(n, p)) * rows[:, None]


def gen_design(n: int, p: int, noise: NoiseSpec, rng):
    """Return (X, X_clean) with X_clean ~ N(0, I) and X = X_clean + xi."""
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive")
    clean = rng.standard_normal((n, p))
    return clean + gen_noise(n, p, noise, rng), clean


def gen_true_theta(p: int, rng) -> np.ndarray:
    if p < 1:
        raise ValueError("p must be positive")
    return rng.random(p)


def response_from_scores(s, kind: str, rng, eta: float = 0.1, tau: float = 0.5) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    bad = np.flatnonzero(~np.isfinite(s))
    if bad.size:
        raise ValueError(f"non-finite score in row {int(bad[0])}")
    if kind == "logistic":
        prob = np.where(s >= 0, 1.0 / (1.0 + np.exp(-np.abs(s))),
                        np.exp(-np.abs(s)) / (1.0 + np.exp(-np.abs(s))))
        return (rng.random(s.size) < prob).astype(float)
    if kind == "nbr":
        mu = np.exp(np.minimum(s, NB_LOG_MEAN_CAP))
        lam = rng.gamma(eta, mu / eta)
        over = np.flatnonzero(~np.isfinite(lam) | (lam > 1e18))
        if over.size:
            raise ValueError(f"negative binomial mean overflow in row {int(over[0])}")
        return rng.poisson(lam).astype(float)
    if kind == "quantile":
        # standard normal errors shifted so that P(err < 0) = tau
        return s + rng.standard_normal(s.size) - norm.ppf(tau)
    raise ValueError(f"unknown response kind {kind!r}")


def gen_response(X, theta_star, kind: str, rng, eta: float = 0.1, tau: float = 0.5) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    theta_star = np.asarray(theta_star, dtype=float)
    if X.shape[1] != theta_star.size:
        raise ValueError("X and theta_star have inconsistent shapes")
    return response_from_scores(X @ theta_star, kind, rng, eta=eta, tau=tau)


def g1(x):
    return -10.0 * np.asarray(x, dtype=float) + 0.3


def g2(x):
    x = np.asarray(x, dtype=float)
    return 0.7 * x ** 3 - 0.2 * x ** 2 + 0.3 * x - 0.3


def g3(x):
    x = np.asarray(x, dtype=float)
    return 0.3 * np.sin(x) * np.sqrt(np.abs(x))


G_FUNCS = (g1, g2, g3)


def additive_target(X, g_index) -> np.ndarray:
    """f0(x) = sum_j g_{k_j}(x_j) with one 1-based function index per column."""
    X = np.asarray(X, dtype=float)
    out = np.zeros(X.shape[0])
    for j, k in enumerate(g_index):
        out += G_FUNCS[int(k) - 1](X[:, j])
    return out


def gen_additive_dnn_data(n: int, p: int, noise: NoiseSpec, rng, kind: str = "logistic",
                          eta: float = 0.03, tau: float = 0.5, g_index=None) -> Dataset:
    """Observed X ~ N(0, I); responses driven by f0(X + xi)."""
    X, _ = gen_design(n, p, NoiseSpec("none"), rng)
    xi = gen_noise(n, p, noise, rng)
    if g_index is None:
        g_index = rng.integers(1, 4, size=p)
    f = additive_target(X + xi, g_index)
    y = response_from_scores(f, kind, rng, eta=eta, tau=tau)
    return Dataset(X, y, latent=f, meta={"g_index": np.asarray(g_index), "noise": noise})
