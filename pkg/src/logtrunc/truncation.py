"""Log-truncation functions psi_lambda(x) = sign(x) * log(1 + |x| + lambda(|x|)).

The high order term lambda(.) comes in six flavours (Catoni's quadratic, four
power laws with different constants, and a truncated exponential series).
Everything here is vectorised over numpy arrays and side-effect free.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

KINDS = ("catoni", "minsker", "chen", "lee", "lam", "xu")
POWER_KINDS = ("catoni", "minsker", "chen", "lee", "lam")


def _pow0(base: float, expo: float) -> float:
    # 0**0 is taken as 1 so that coefficients extend continuously to eps = 1
    if base == 0.0 and expo == 0.0:
        return 1.0
    if base == 0.0:
        return 0.0 if expo > 0 else math.inf
    return base ** expo


def power_coefficient(kind: str, eps: float) -> float:
    """Constant c in lambda(x) = c * x**(1+eps) for the power-law variants."""
    if kind == "catoni":
        return 0.5
    if kind == "chen":
        return 1.0 / (1.0 + eps)
    if kind == "minsker":
        return max(eps / (1.0 + eps), math.sqrt((1.0 - eps) / (1.0 + eps)))
    if kind == "lee":
        if eps == 1.0:
            # limit of the bracket as (1-eps)/eps -> 0 is 2, so the constant is 1/2
            return 0.5
        q = (1.0 - eps) / eps
        e1 = 1.0 - 2.0 / (1.0 + eps)
        e2 = 2.0 - 2.0 / (1.0 + eps)
        return (2.0 * _pow0(q, e1) + _pow0(q, e2)) ** (-(1.0 + eps) / 2.0)
    if kind == "lam":
        return ((1.0 + eps) ** (-(1.0 + eps) / 2.0)
                * _pow0(1.0 - eps, 1.0 - (1.0 + eps) / 2.0)
                * _pow0(eps, eps))
    raise ValueError(f"{kind!r} is not a power-law variant")


@dataclass(frozen=True)
class HighOrderFn:
    """A high order function lambda: [0, inf) -> [0, inf).

    ``epsilon`` is ignored by ``catoni`` (always exponent 2) and ``xu``
    (which uses the partial exponential series sum_{k=2}^m x^k / k!).
    """

    kind: str = "chen"
    epsilon: float = 1.0
    m: int = 2

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown high order function {self.kind!r}; expected one of {KINDS}")
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.kind == "xu" and (int(self.m) != self.m or self.m < 2):
            raise ValueError(f"xu polynomial order must be an integer >= 2, got {self.m}")

    @property
    def is_power(self) -> bool:
        return self.kind in POWER_KINDS

    @property
    def exponent(self) -> float:
        if self.kind == "catoni":
            return 2.0
        if self.kind == "xu":
            raise ValueError("xu has no single exponent")
        return 1.0 + self.epsilon

    @property
    def coef(self) -> float:
        return power_coefficient(self.kind, self.epsilon)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "xu":
            out = np.zeros_like(x)
            term = x.copy()
            for k in range(2, self.m + 1):
                term = term * x / k
                out = out + term
            return out
        return self.coef * x ** self.exponent

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "xu":
            # d/dx sum_{k=2}^m x^k/k! = sum_{k=1}^{m-1} x^k/k!
            out = np.zeros_like(x)
            term = np.ones_like(x)
            for k in range(1, self.m):
                term = term * x / k
                out = out + term
            return out
        b = self.exponent
        return self.coef * b * x ** (b - 1.0)

    def __call__(self, x):
        return lambda_eval(self, x)


@dataclass(frozen=True)
class TruncationSpec:
    lam: HighOrderFn
    alpha: float = 1.0

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha}")


@dataclass(frozen=True)
class C1Constants:
    """Weak-triangle constant c2 and homogeneity function f(t).

    Power laws have f(t) = t**f_exponent; the xu series uses
    f(t) = max(t**2, t**m) and leaves ``f_exponent`` unset.
    """

    c2: float
    f_exponent: Optional[float] = None
    m: Optional[int] = None

    def f(self, t):
        t = np.asarray(t, dtype=float)
        if self.f_exponent is not None:
            return t ** self.f_exponent
        return np.maximum(t ** 2, t ** self.m)

    def f_inv(self, v: float) -> float:
        if v < 0:
            raise ValueError("f^{-1} is defined on [0, inf)")
        if self.f_exponent is not None:
            return v ** (1.0 / self.f_exponent)
        # f is continuous and strictly increasing; bisect in log space
        lo, hi = 0.0, 1.0
        while float(self.f(hi)) < v:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if float(self.f(mid)) < v:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15 * max(hi, 1e-300):
                break
        return 0.5 * (lo + hi)


def _check_finite(x, what="x"):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{what} must be finite")
    return x


def lambda_eval(fn: HighOrderFn, x):
    x = _check_finite(x)
    if np.any(x < 0):
        raise ValueError("lambda is defined on [0, inf); got a negative argument")
    out = fn.value(x)
    return float(out) if out.ndim == 0 else out


def psi_eval(fn: HighOrderFn, x):
    """sign(x) * log(1 + |x| + lambda(|x|))."""
    x = _check_finite(x)
    ax = np.abs(x)
    out = np.sign(x) * np.log1p(ax + fn.value(ax))
    return float(out) if out.ndim == 0 else out


def psi_deriv(fn: HighOrderFn, x):
    """Score weight (1 + lambda'(|x|)) / (1 + |x| + lambda(|x|))."""
    x = _check_finite(x)
    ax = np.abs(x)
    out = (1.0 + fn.deriv(ax)) / (1.0 + ax + fn.value(ax))
    return float(out) if out.ndim == 0 else out


def c1_constants(fn: HighOrderFn) -> C1Constants:
    if fn.kind == "xu":
        return C1Constants(c2=2.0 ** (fn.m - 1), m=fn.m)
    b = fn.exponent
    return C1Constants(c2=2.0 ** (b - 1.0), f_exponent=b)


@dataclass
class SandwichReport:
    passed: bool
    worst_slack: float
    n_checked: int
    worst_x: float


def sandwich_grid(n_samples: int, rng_seed=0) -> np.ndarray:
    rng = np.random.default_rng(rng_seed)
    grid = np.concatenate([np.zeros(1), np.geomspace(1e-12, 1e12, 241)])
    grid = np.concatenate([grid, -grid])
    n_rand = max(n_samples - grid.size, 0)
    # Cauchy draws cover both tiny and huge magnitudes
    draws = rng.standard_cauchy(n_rand) * rng.choice([1e-3, 1.0, 1e3], size=n_rand)
    return np.concatenate([grid, draws])[:max(n_samples, 1)]


def verify_sandwich(fn: HighOrderFn, n_samples: int = 100_000, rng_seed=0,
                    tol: float = 1e-12) -> SandwichReport:
    """Check -log(1 - x + lam(|x|)) <= psi(x) <= log(1 + x + lam(|x|)).

    Each side is only checked where its log argument is positive.  Violations
    are reported through the returned ``passed`` flag, never raised.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    x = sandwich_grid(n_samples, rng_seed)
    lam = fn.value(np.abs(x))
    psi = psi_eval(fn, x)
    psi = np.atleast_1d(psi)
    worst, worst_x = math.inf, math.nan

    lo_arg = 1.0 - x + lam
    ok = lo_arg > 0
    if np.any(ok):
        slack = psi[ok] + np.log(lo_arg[ok])
        i = int(np.argmin(slack))
        if slack[i] < worst:
            worst, worst_x = float(slack[i]), float(x[ok][i])

    up_arg = 1.0 + x + lam
    ok = up_arg > 0
    if np.any(ok):
        slack = np.log(up_arg[ok]) - psi[ok]
        i = int(np.argmin(slack))
        if slack[i] < worst:
            worst, worst_x = float(slack[i]), float(x[ok][i])

    return SandwichReport(passed=bool(worst >= -tol), worst_slack=worst,
                          n_checked=int(x.size), worst_x=worst_x)


def parse_high_order(name: str, epsilon: float = 1.0, m: int = 2) -> HighOrderFn:
    """Accepts ``"chen"`` or ``"xu:4"``-style names as used in config files."""
    name = name.strip().lower()
    if ":" in name:
        name, arg = name.split(":", 1)
        if name == "xu":
            m = int(arg)
        else:
            epsilon = float(arg)
    return HighOrderFn(name, epsilon=epsilon, m=m)
