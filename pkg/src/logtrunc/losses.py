"""Losses l(y, s) on a scalar score s, with derivatives in s and Lipschitz envelopes."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def check_loss(u, tau):
    """rho_tau(u) = u * (tau - 1(u < 0))."""
    u = np.asarray(u, dtype=float)
    return u * (tau - (u < 0))


def softplus(s):
    s = np.asarray(s, dtype=float)
    big = s > 30
    safe = np.where(big, 0.0, s)
    return np.where(big, s + np.log1p(np.exp(-np.abs(s))), np.log1p(np.exp(safe)))


def sigmoid(s):
    s = np.asarray(s, dtype=float)
    e = np.exp(-np.abs(s))
    return np.where(s >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _log_eta_plus_exp(s, eta):
    # log(eta + e^s) without overflow
    return np.logaddexp(math.log(eta), s)


@dataclass(frozen=True)
class LossFn:
    kind: str
    tau: float = 0.5
    eta: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("quantile", "logistic", "nbr"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "quantile" and not (0.0 < self.tau < 1.0):
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.kind == "nbr" and not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError(f"dispersion eta must be positive, got {self.eta}")

    @property
    def l_tau(self) -> float:
        return max(1.0 + self.tau, 2.0 - self.tau)

    def validate_y(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise ValueError("response contains non-finite values")
        if self.kind == "logistic" and not np.all((y == 0) | (y == 1)):
            raise ValueError("logistic loss needs y in {0, 1}")
        if self.kind == "nbr" and not np.all((y >= 0) & (y == np.floor(y))):
            raise ValueError("negative binomial loss needs non-negative integer y")
        return y

    def value(self, y, s, check=True):
        y = self.validate_y(y) if check else np.asarray(y, dtype=float)
        s = np.asarray(s, dtype=float)
        if self.kind == "quantile":
            return check_loss(y - s, self.tau)
        if self.kind == "logistic":
            return softplus(s) - y * s
        # full NB kernel: the eta*log(eta) shift keeps the loss non-negative
        lg = _log_eta_plus_exp(s, self.eta)
        return -(y * (s - lg) + self.eta * (math.log(self.eta) - lg))

    def grad(self, y, s, check=True):
        """d l / d s.  At the quantile kink rho' is taken as tau - 1."""
        y = self.validate_y(y) if check else np.asarray(y, dtype=float)
        s = np.asarray(s, dtype=float)
        if self.kind == "quantile":
            return -(self.tau - ((y - s) <= 0))
        if self.kind == "logistic":
            return sigmoid(s) - y
        # e^s / (eta + e^s) = sigmoid(s - log eta)
        return (y + self.eta) * sigmoid(s - math.log(self.eta)) - y

    def lipschitz_H(self, y, x_norm):
        x_norm = np.asarray(x_norm, dtype=float)
        if np.any(x_norm < 0):
            raise ValueError("x_norm must be non-negative")
        if self.kind == "quantile":
            return self.l_tau * x_norm
        if self.kind == "logistic":
            return 2.0 * x_norm
        return (np.asarray(y, dtype=float) + self.eta) * x_norm

    def __str__(self) -> str:
        if self.kind == "quantile":
            return f"quantile:{self.tau:g}"
        if self.kind == "nbr":
            return f"nbr:{self.eta:g}"
        return "logistic"


def parse_loss(name: str) -> LossFn:
    """``"quantile:0.5"``, ``"logistic"`` or ``"nbr:0.1"``."""
    name = name.strip().lower()
    head, _, arg = name.partition(":")
    if head == "quantile":
        return LossFn("quantile", tau=float(arg) if arg else 0.5)
    if head == "nbr":
        return LossFn("nbr", eta=float(arg) if arg else 1.0)
    if head == "logistic" and not arg:
        return LossFn("logistic")
    raise ValueError(f"cannot parse loss {name!r}")


def loss_value(loss: LossFn, y, s):
    out = loss.value(y, s)
    return float(out) if np.ndim(out) == 0 else out


def loss_grad(loss: LossFn, y, s):
    out = loss.grad(y, s)
    return float(out) if np.ndim(out) == 0 else out


def lipschitz_H(loss: LossFn, y, x_norm):
    out = loss.lipschitz_H(y, x_norm)
    return float(out) if np.ndim(out) == 0 else out


def knight_integral(u: float, v: float) -> float:
    """Closed form of int_0^v [1(u <= s) - 1(u <= 0)] ds."""
    if v >= 0:
        first = max(0.0, v - max(u, 0.0))
    else:
        first = -max(0.0, -max(u, v))
    return first - (v if u <= 0 else 0.0)


def knight_identity_check(tau: float, u: float, v: float) -> float:
    """Residual of Knight's identity for the check loss; zero up to rounding.

    The linear term uses rho'(u) = tau - 1(u <= 0), the same kink convention as
    the loss gradient, which makes the identity exact at u = 0 as well.
    """
    if not (0.0 < tau < 1.0):
        raise ValueError("tau must lie in (0, 1)")
    lhs = float(check_loss(u - v, tau)) - float(check_loss(u, tau))
    rhs = -v * (tau - (1.0 if u <= 0 else 0.0)) + knight_integral(u, v)
    return abs(lhs - rhs)
