"""Numerical evaluation of the non-asymptotic excess-risk bounds.

Only formula evaluation lives here; nothing checks that the bounds actually
hold with the advertised probability.  Sums use ``math.fsum`` because the
terms routinely differ by ten or more orders of magnitude.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .truncation import HighOrderFn, c1_constants


@dataclass(frozen=True)
class DnnBlock:
    L: int
    M: float
    K: float
    ED: float           # E[||X|| D(X, Y)]
    ED_pow: float       # E[(||X|| D(X, Y))^(1+eps)]
    a: float = 1.0      # activation Lipschitz constant, 1 for ReLU


@dataclass(frozen=True)
class BoundInputs:
    n: int
    p: int
    epsilon: float
    delta: float
    r: float
    sup_risk: float
    EH: float = 0.0              # E[H(Y, X)]
    EH_pow: float = 0.0          # E[H(Y, X)^(1+eps)]
    E_lambda_H: Optional[float] = None   # E[lambda(H)], needed for the xu series
    c_l: Optional[float] = None
    dnn: Optional[DnnBlock] = None

    def __post_init__(self) -> None:
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive integers")
        if not (0 < self.epsilon <= 1):
            raise ValueError("epsilon must lie in (0, 1]")
        if not (0 < self.delta < 0.5):
            raise ValueError("delta must lie in (0, 1/2)")
        if not self.r > 0:
            raise ValueError("radius must be positive")
        if self.EH < 0 or self.EH_pow < 0:
            raise ValueError("moments must be non-negative")
        for v in (self.n, self.r, self.sup_risk, self.EH, self.EH_pow):
            if not math.isfinite(v):
                raise ValueError("bound inputs must be finite")


def covering_log_bound(p: int, r: float, kappa: float) -> float:
    """log N(B_r, kappa) <= p log(1 + 2r/kappa)."""
    if p < 1 or r <= 0 or kappa <= 0:
        raise ValueError("need p >= 1, r > 0, kappa > 0")
    return p * math.log1p(2.0 * r / kappa)


def _log_term(inp: BoundInputs, r: Optional[float] = None) -> float:
    r = inp.r if r is None else r
    return math.fsum([math.log(inp.delta ** -2), covering_log_bound(inp.p, r, 1.0 / inp.n)])


def _check_sup(inp: BoundInputs) -> None:
    if not inp.sup_risk > 0:
        raise ValueError("sup_risk must be positive")


def theorem1_alphas(inp: BoundInputs, lam: HighOrderFn, literal_lower: bool = False):
    """(lower, upper) tuning scales f^{-1}(log-term / (n (c2+1) sup_risk)).

    The upper scale uses log(1 + 2rn).  The lower one uses the same term unless
    ``literal_lower`` asks for the log(rn) variant printed next to it.
    """
    _check_sup(inp)
    c1 = c1_constants(lam)
    denom = inp.n * (c1.c2 + 1.0) * inp.sup_risk
    upper = c1.f_inv(_log_term(inp) / denom)
    if literal_lower:
        lower_log = math.fsum([math.log(inp.delta ** -2), inp.p * math.log(inp.r * inp.n)])
        if lower_log <= 0:
            raise ValueError("log(delta^-2) + p log(rn) must be positive")
        lower = c1.f_inv(lower_log / denom)
    else:
        lower = upper
    return lower, upper


def expected_lambda_H(inp: BoundInputs, lam: HighOrderFn) -> float:
    if inp.E_lambda_H is not None:
        return inp.E_lambda_H
    if lam.kind == "xu":
        raise ValueError("E_lambda_H must be supplied for the xu series")
    if lam.kind == "catoni" and inp.epsilon != 1.0:
        raise ValueError("catoni needs E|H|^2; pass E_lambda_H or use epsilon = 1")
    return lam.coef * inp.EH_pow


def excess_bound_thm1(inp: BoundInputs, lam: HighOrderFn, literal_lower: bool = False) -> float:
    """2 EH/n + c2 E[lambda(H)] f(a_up/n)/a_lo + 2 log-term/(n a_lo)."""
    c1 = c1_constants(lam)
    lower, upper = theorem1_alphas(inp, lam, literal_lower)
    terms = [
        2.0 * inp.EH / inp.n,
        c1.c2 * expected_lambda_H(inp, lam) * float(c1.f(upper / inp.n)) / lower,
        2.0 * _log_term(inp) / (inp.n * lower),
    ]
    return math.fsum(terms)


def excess_bound_thm2(inp: BoundInputs, r: Optional[float] = None) -> float:
    """Closed form for lambda(x) = |x|^(1+eps)/(1+eps); O((p log n / n)^(eps/(1+eps)))."""
    _check_sup(inp)
    e, n, S = inp.epsilon, inp.n, inp.sup_risk
    k = 2.0 ** e + 1.0
    rate = n ** (-e / (e + 1.0)) * (_log_term(inp, r) / k) ** (e / (e + 1.0))
    bracket = math.fsum([
        2.0 * k * S ** (1.0 / (1.0 + e)),
        2.0 ** e * inp.EH_pow / ((1.0 + e) * n ** (e + 1.0) * S ** (e / (e + 1.0))),
    ])
    return math.fsum([2.0 * inp.EH / n, rate * bracket])


def l2_bound_corollary(inp: BoundInputs, excess: float) -> float:
    """Squared l2 error bound: every term of the excess bound divided by c_l."""
    if inp.c_l is None:
        raise ValueError("curvature constant c_l is required")
    if inp.c_l <= 0:
        raise ValueError("c_l must be positive")
    return excess / inp.c_l


def dnn_lipschitz_factor(block: DnnBlock) -> float:
    if block.L < 1:
        raise ValueError("network depth L must be >= 1")
    return 2.0 * (block.a * block.M) ** block.L * math.sqrt(block.L)


def depth_sample_ok(block: DnnBlock, n: int, epsilon: float, C: float = 1.0) -> bool:
    """log(aM) L + log(L)/2 <= log C + log(n)/(1+eps)."""
    if block.L < 1:
        raise ValueError("network depth L must be >= 1")
    lhs = math.log(block.a * block.M) * block.L + 0.5 * math.log(block.L)
    return lhs <= math.log(C) + math.log(n) / (epsilon + 1.0)


def dnn_bound(inp: BoundInputs, C: float = 1.0):
    """Network excess bound with H = 2 (aM)^L sqrt(L) ||x|| D(x, y) and the
    covering radius K; returns ``(value, depth_sample_ok)``."""
    if inp.dnn is None:
        raise ValueError("dnn block is required")
    d = inp.dnn
    h = dnn_lipschitz_factor(d)
    e = inp.epsilon
    sub = BoundInputs(n=inp.n, p=inp.p, epsilon=e, delta=inp.delta, r=d.K,
                      sup_risk=inp.sup_risk, EH=h * d.ED, EH_pow=h ** (1.0 + e) * d.ED_pow)
    return excess_bound_thm2(sub), depth_sample_ok(d, inp.n, e, C)


def qr_hetero_bound(n: int, p: int, delta: float, r: float, tau: float,
                    EX_norm: float, EX_norm_sq: float, sigma_R: float) -> float:
    """Quantile-regression excess bound under heterogeneous noise with second moments."""
    if not (0 < tau < 1):
        raise ValueError("tau must lie in (0, 1)")
    if sigma_R <= 0 or EX_norm < 0 or EX_norm_sq < 0:
        raise ValueError("need sigma_R > 0 and non-negative moments")
    l_tau = max(1.0 + tau, 2.0 - tau)
    cover = math.fsum([2.0 * math.log(delta ** -2), 2.0 * p * math.log1p(2.0 * r * n)])
    root = math.sqrt(cover / n)
    s3 = math.sqrt(3.0)
    bracket = math.fsum([s3 * sigma_R, l_tau ** 2 * EX_norm_sq / (s3 * sigma_R * n ** 2)])
    return math.fsum([2.0 * l_tau * EX_norm / n, root * bracket])
