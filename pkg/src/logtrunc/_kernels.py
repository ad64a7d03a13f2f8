"""Compiled inner loop for SGD on linear scores.

Loss codes: 0 quantile, 1 logistic, 2 negative binomial.
High order codes: 0 power law (coef * x**b), 1 exponential partial sum up to m.
``alpha <= 0`` switches truncation off.
"""
import math

import numpy as np
from numba import njit

LOSS_CODES = {"quantile": 0, "logistic": 1, "nbr": 2}


@njit(cache=True)
def _loss_and_slope(kind, tau, eta, y, s):
    if kind == 0:
        u = y - s
        if u < 0:
            return u * (tau - 1.0), -(tau - 1.0)
        if u == 0:
            return 0.0, -(tau - 1.0)
        return u * tau, -tau
    if kind == 1:
        if s > 30:
            sp = s + math.log1p(math.exp(-s))
        else:
            sp = math.log1p(math.exp(s))
        if s >= 0:
            sig = 1.0 / (1.0 + math.exp(-s))
        else:
            e = math.exp(s)
            sig = e / (1.0 + e)
        return sp - y * s, sig - y
    le = math.log(eta)
    if s > le:
        lg = s + math.log1p(math.exp(le - s))
    else:
        lg = le + math.log1p(math.exp(s - le))
    t = s - le
    if t >= 0:
        sig = 1.0 / (1.0 + math.exp(-t))
    else:
        e = math.exp(t)
        sig = e / (1.0 + e)
    return -(y * (s - lg) + eta * (le - lg)), (y + eta) * sig - y


@njit(cache=True)
def _score_weight(lam_kind, coef, b, m, x):
    ax = abs(x)
    if lam_kind == 0:
        lam = coef * ax ** b
        dlam = coef * b * ax ** (b - 1.0) if ax > 0 else (coef * b if b == 1.0 else 0.0)
    else:
        lam = 0.0
        dlam = 0.0
        term = 1.0
        for k in range(1, m + 1):
            term = term * ax / k
            if k >= 2:
                lam += term
            if k <= m - 1:
                dlam += term
    return (1.0 + dlam) / (1.0 + ax + lam)


@njit(cache=True)
def linear_sgd_epoch(X, y, theta, perm, batch, step, lr0, t_decay,
                     kind, tau, eta, alpha, lam_kind, coef, b, m, rho, radius):
    n = perm.shape[0]
    p = theta.shape[0]
    grad = np.zeros(p)
    start = 0
    while start < n:
        stop = min(start + batch, n)
        for j in range(p):
            grad[j] = 0.0
        for k in range(start, stop):
            i = perm[k]
            s = 0.0
            for j in range(p):
                s += X[i, j] * theta[j]
            val, slope = _loss_and_slope(kind, tau, eta, y[i], s)
            if alpha > 0:
                slope *= _score_weight(lam_kind, coef, b, m, alpha * val)
            for j in range(p):
                grad[j] += slope * X[i, j]
        cnt = stop - start
        lr = lr0 / (1.0 + step / t_decay)
        nrm = 0.0
        for j in range(p):
            nrm += theta[j] * theta[j]
        nrm = math.sqrt(nrm)
        pen = 0.0
        if rho > 0 and nrm > 0:
            pen = rho / nrm
            if alpha > 0:
                pen = pen / alpha
        for j in range(p):
            theta[j] -= lr * (grad[j] / cnt + pen * theta[j])
        if radius > 0:
            nrm = 0.0
            for j in range(p):
                nrm += theta[j] * theta[j]
            nrm = math.sqrt(nrm)
            if nrm > radius:
                for j in range(p):
                    theta[j] *= radius / nrm
        step += 1
        start = stop
    return step
