"""Truncated empirical risk, its gradient, SGD, tuning and NB dispersion."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from . import _kernels
from .losses import LossFn
from .model import LinearParams, MlpParams, flat_grad, predict
from .truncation import HighOrderFn, TruncationSpec, psi_deriv, psi_eval

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


@dataclass
class TruncatedObjective:
    """(1/(n alpha)) sum psi(alpha * l_i) + rho * ||params||_2.

    ``trunc=None`` gives the plain ridge-type objective mean(l_i) + rho ||params||.
    """

    loss: LossFn
    trunc: Optional[TruncationSpec]
    ridge_rho: float
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=float)
        self.y = self.loss.validate_y(self.y)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.size:
            raise ValueError("X must be n x p with one response per row")
        if self.X.shape[0] == 0:
            raise ValueError("empty data")
        if self.ridge_rho < 0:
            raise ValueError("ridge_rho must be >= 0")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def with_rho(self, rho: float) -> "TruncatedObjective":
        return replace(self, ridge_rho=rho)


def per_sample_loss(obj: TruncatedObjective, params) -> np.ndarray:
    return obj.loss.value(obj.y, predict(params, obj.X), check=False)


def truncated_risk(obj: TruncatedObjective, params) -> float:
    losses = per_sample_loss(obj, params)
    if obj.trunc is None:
        data = float(np.mean(losses))
    else:
        a = obj.trunc.alpha
        data = float(np.sum(psi_eval(obj.trunc.lam, a * losses))) / (obj.n * a)
    return data + obj.ridge_rho * params.norm()


def truncated_risk_grad(obj: TruncatedObjective, params) -> np.ndarray:
    """Flat gradient: mean_i psi'(alpha l_i) grad l_i + rho * params / ||params||."""
    s = predict(params, obj.X)
    slope = obj.loss.grad(obj.y, s, check=False)
    if obj.trunc is not None:
        a = obj.trunc.alpha
        slope = slope * psi_deriv(obj.trunc.lam, a * obj.loss.value(obj.y, s, check=False))
    g = flat_grad(params, obj.X, slope / obj.n)
    vec = params.ravel()
    nrm = np.linalg.norm(vec)
    if obj.ridge_rho > 0 and nrm > 0:
        g = g + obj.ridge_rho * vec / nrm
    return g


# ---------------------------------------------------------------- alpha


@dataclass(frozen=True)
class AlphaInputs:
    n: int
    p: int
    epsilon: float
    delta: float
    r: float
    sup_risk: float

    def __post_init__(self) -> None:
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if not (0 < self.epsilon <= 1):
            raise ValueError("epsilon must lie in (0, 1]")
        if not (0 < self.delta < 0.5):
            raise ValueError("delta must lie in (0, 1/2)")
        if not (self.r > 0 and self.sup_risk > 0):
            raise ValueError("r and sup_risk must be positive")


def default_alpha(inp: AlphaInputs) -> float:
    """Variance/bias balancing alpha for lambda(x) = |x|^(1+eps)/(1+eps)."""
    e = inp.epsilon
    cover = math.log(inp.delta ** -2) + inp.p * math.log1p(2.0 * inp.r * inp.n)
    inner = cover / ((2.0 ** e + 1.0) * inp.sup_risk)
    alpha = inp.n ** (-1.0 / (1.0 + e)) * inner ** (1.0 / (1.0 + e))
    if not math.isfinite(alpha) or alpha <= 0:
        raise ValueError(f"default alpha is not finite for {inp}")
    return alpha


def plugin_sup_risk(lam: HighOrderFn, losses) -> float:
    """Empirical mean of lambda(|l_i|), clipped below at 1e-6."""
    return max(float(np.mean(lam.value(np.abs(np.asarray(losses, dtype=float))))), 1e-6)


# ---------------------------------------------------------------- SGD


@dataclass
class SgdConfig:
    lr0: float = 0.05
    decay_steps: float = 1000.0
    epochs: int = 50
    batch_size: Optional[int] = None
    seed: int = 0
    projection_radius: Optional[float] = None
    max_objective: float = 1e12

    def __post_init__(self) -> None:
        if self.lr0 <= 0 or self.decay_steps <= 0:
            raise ValueError("learning rate and decay horizon must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def batch_for(self, n: int, params) -> int:
        if self.batch_size is not None:
            return min(self.batch_size, n)
        if isinstance(params, MlpParams):
            return max(1, n // 4)
        return 1


@dataclass
class FitResult:
    params: object
    trace: List[float]
    steps: int


def _sgd_objective(obj: TruncatedObjective) -> TruncatedObjective:
    # the literal step scales the whole bracket, penalty included, by r_t / alpha, so
    # the function being descended carries rho / alpha
    if obj.trunc is None:
        return obj
    return obj.with_rho(obj.ridge_rho / obj.trunc.alpha)


def _lam_codes(lam: HighOrderFn):
    if lam.kind == "xu":
        return 1, 0.0, 0.0, lam.m
    return 0, lam.coef, lam.exponent, 0


def _project(vec: np.ndarray, radius: Optional[float]) -> np.ndarray:
    if radius is not None:
        nrm = np.linalg.norm(vec)
        if nrm > radius:
            vec = vec * (radius / nrm)
    return vec


def sgd_fit(obj: TruncatedObjective, params, cfg: SgdConfig,
            step_offset: int = 0) -> FitResult:
    """Stochastic gradient descent on ``obj`` starting from ``params``.

    Each step is theta <- theta - (r_t / alpha) grad{psi(alpha l_i) + rho ||theta||}
    averaged over the mini-batch, with r_t = lr0 / (1 + t / decay_steps).  The
    untruncated objective uses theta <- theta - r_t grad{l_i + rho ||theta||}.
    Because the penalty is inside the 1/alpha scaling, the trace reports
    R_psi + (rho / alpha) ||theta||, the function actually descended.
    """
    n = obj.n
    rng = np.random.default_rng(cfg.seed)
    batch = cfg.batch_for(n, params)
    traced = _sgd_objective(obj)
    vec = _project(params.ravel(), cfg.projection_radius)
    params = params.with_flat(vec)
    trace = [truncated_risk(traced, params)]
    step = step_offset
    alpha = obj.trunc.alpha if obj.trunc is not None else 0.0
    linear = isinstance(params, LinearParams)
    if linear:
        lam_kind, coef, b, m = _lam_codes(obj.trunc.lam) if obj.trunc else (0, 0.0, 2.0, 0)
        code = _kernels.LOSS_CODES[obj.loss.kind]
        radius = cfg.projection_radius or -1.0
        theta = np.ascontiguousarray(vec.copy())
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        if linear:
            step = _kernels.linear_sgd_epoch(
                obj.X, obj.y, theta, perm, batch, step, cfg.lr0, cfg.decay_steps,
                code, obj.loss.tau, obj.loss.eta, alpha, lam_kind, coef, b, m,
                obj.ridge_rho, radius)
            params = LinearParams(theta.copy())
        else:
            for start in range(0, n, batch):
                idx = perm[start:start + batch]
                lr = cfg.lr0 / (1.0 + step / cfg.decay_steps)
                vec = params.ravel() - lr * _batch_grad(obj, params, idx)
                params = params.with_flat(_project(vec, cfg.projection_radius))
                step += 1
        value = truncated_risk(traced, params)
        trace.append(value)
        if not math.isfinite(value) or value > cfg.max_objective or \
                not np.all(np.isfinite(params.ravel())):
            raise DivergenceError(f"SGD diverged in epoch {epoch} (objective {value:.3g})", trace)
    return FitResult(params=params, trace=trace, steps=step)


def _batch_grad(obj: TruncatedObjective, params, idx) -> np.ndarray:
    Xb, yb = obj.X[idx], obj.y[idx]
    s = predict(params, Xb)
    slope = obj.loss.grad(yb, s, check=False)
    if obj.trunc is not None:
        slope = slope * psi_deriv(obj.trunc.lam,
                                  obj.trunc.alpha * obj.loss.value(yb, s, check=False))
    g = flat_grad(params, Xb, slope / len(idx))
    vec = params.ravel()
    nrm = np.linalg.norm(vec)
    if obj.ridge_rho > 0 and nrm > 0:
        pen = obj.ridge_rho / (obj.trunc.alpha if obj.trunc is not None else 1.0)
        g = g + pen * vec / nrm
    return g


# ---------------------------------------------------------------- tuning


@dataclass
class SearchSpec:
    """Log-scale bisection over alpha and rho for every epsilon in the grid."""

    eps_grid: Sequence[float] = (1.0,)
    alpha_range: Tuple[float, float] = (1e-4, 1e2)
    rho_range: Tuple[float, float] = (1e-4, 1e2)
    iterations: int = 12
    rho_start: float = 1e-4
    holdout_fraction: float = 0.25
    seed: int = 0
    lam_kind: str = "chen"
    fixed_alpha: Optional[float] = None
    truncated: bool = True

    def __post_init__(self) -> None:
        if not (0 < self.holdout_fraction < 1):
            raise ValueError("holdout_fraction must lie in (0, 1)")
        if len(self.eps_grid) == 0:
            raise ValueError("eps_grid is empty")
        for lo, hi in (self.alpha_range, self.rho_range):
            if not (0 < lo <= hi):
                raise ValueError("search ranges must be positive and ordered")


@dataclass
class TuneResult:
    alpha: Optional[float]
    rho: float
    epsilon: Optional[float]
    holdout_loss: float
    params: object = None
    evaluations: List[Tuple[Optional[float], Optional[float], float, float]] = field(default_factory=list)


def log2_bisect(fn, lo: float, hi: float, iterations: int) -> Tuple[float, float]:
    """Minimise ``fn`` over [lo, hi] by halving the log2 interval ``iterations`` times.

    Each round compares the centre with the two quarter points and keeps the
    half-width interval centred on the best; ties prefer the smaller argument.
    """
    a, b = math.log2(lo), math.log2(hi)
    cache: Dict[float, float] = {}

    def f(t):
        if t not in cache:
            cache[t] = fn(2.0 ** t)
        return cache[t]

    for _ in range(iterations):
        if b - a <= 0:
            break
        mid = 0.5 * (a + b)
        q1, q3 = 0.5 * (a + mid), 0.5 * (mid + b)
        vals = [(f(q1), q1), (f(mid), mid), (f(q3), q3)]
        best = min(vals)
        half = 0.25 * (b - a)
        a, b = best[1] - half, best[1] + half
    pts = sorted(cache.items(), key=lambda kv: (kv[1], kv[0]))
    if not pts:
        t = 0.5 * (a + b)
        return 2.0 ** t, f(t)
    t, v = pts[0]
    return 2.0 ** t, v


def tune_hyperparams(X, y, loss: LossFn, params0, sgd: SgdConfig, search: SearchSpec,
                     warm_epochs: int = 5) -> TuneResult:
    """Pick (alpha, rho, eps) by held-out untruncated loss.

    The training split is refit for every candidate with the same seed and the
    same untruncated warm start; the lexicographic key (loss, alpha, rho)
    decides between candidates.
    """
    X = np.asarray(X, dtype=float)
    y = loss.validate_y(y)
    n = X.shape[0]
    rng = np.random.default_rng(search.seed)
    perm = rng.permutation(n)
    n_hold = min(max(1, int(round(search.holdout_fraction * n))), n - 1)
    hold, train = perm[:n_hold], perm[n_hold:]
    Xtr, ytr, Xho, yho = X[train], y[train], X[hold], y[hold]

    base = TruncatedObjective(loss, None, 0.0, Xtr, ytr)
    warm = params0
    if warm_epochs > 0:
        warm = sgd_fit(base, params0, replace(sgd, epochs=warm_epochs)).params
    evaluations = []

    def holdout(alpha, rho, lam):
        trunc = TruncationSpec(lam, alpha) if alpha is not None else None
        obj = TruncatedObjective(loss, trunc, rho, Xtr, ytr)
        try:
            fit = sgd_fit(obj, warm, sgd)
            val = float(np.mean(loss.value(yho, predict(fit.params, Xho), check=False)))
        except DivergenceError:
            val = math.inf
        if not math.isfinite(val):
            val = math.inf
        evaluations.append((alpha, rho, lam.epsilon if alpha is not None else None, val))
        return val

    candidates = []
    eps_list = list(search.eps_grid) if search.truncated else [None]
    for eps in eps_list:
        lam = HighOrderFn(search.lam_kind, epsilon=eps if eps is not None else 1.0)
        if not search.truncated:
            alpha = None
        elif search.fixed_alpha is not None:
            alpha = search.fixed_alpha
        else:
            alpha, _ = log2_bisect(lambda a: holdout(a, search.rho_start, lam),
                                   *search.alpha_range, search.iterations)
        rho, val = log2_bisect(lambda r: holdout(alpha, r, lam),
                               *search.rho_range, search.iterations)
        candidates.append((val, alpha if alpha is not None else 0.0, rho, eps, alpha))
    candidates.sort(key=lambda c: c[:3])
    val, _, rho, eps, alpha = candidates[0]
    if not math.isfinite(val):
        raise DivergenceError("every hyperparameter candidate diverged")
    return TuneResult(alpha=alpha, rho=rho, epsilon=eps, holdout_loss=val,
                      evaluations=evaluations)


# ---------------------------------------------------------------- dispersion


def nb_loglik(y, eta: float, mu: float) -> float:
    y = np.asarray(y, dtype=float)
    return float(np.sum(gammaln(y + eta) - gammaln(eta) - gammaln(y + 1)
                        + y * (math.log(mu) - math.log(eta + mu))
                        + eta * (math.log(eta) - math.log(eta + mu))))


def estimate_dispersion(y, lo: float = 1e-4, hi: float = 1e4) -> float:
    """Maximum likelihood NB dispersion with the mean fixed at the sample mean.

    Bounded scalar search over log(eta) in [lo, hi].  Under-dispersed or
    Poisson-like samples push the estimate to ``hi``.
    """
    y = np.asarray(y, dtype=float)
    if y.size == 0 or np.any(y < 0) or np.any(y != np.floor(y)):
        raise ValueError("counts must be non-negative integers")
    if np.all(y == y[0]):
        raise ValueError("zero-variance counts: dispersion is not identifiable")
    mu = float(np.mean(y))
    f = lambda t: -nb_loglik(y, math.exp(t), mu)
    a, b = math.log(lo), math.log(hi)
    res = minimize_scalar(f, bounds=(a, b), method="bounded", options={"xatol": 1e-10})
    # the bracket ends are candidates too (monotone likelihoods hit them)
    return math.exp(min((f(t), t) for t in (a, res.x, b))[1])
