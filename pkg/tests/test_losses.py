import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from logtrunc.losses import (LossFn, knight_identity_check, lipschitz_H, loss_grad, loss_value,
                             parse_loss)


def test_loss_value_examples():
    assert loss_value(LossFn("quantile", tau=0.5), 2.0, 0.0) == pytest.approx(1.0)
    assert loss_value(LossFn("quantile", tau=0.25), -4.0, 0.0) == pytest.approx(3.0)
    assert loss_value(LossFn("logistic"), 0.0, 0.0) == pytest.approx(math.log(2), rel=1e-15)
    nb = loss_value(LossFn("nbr", eta=0.1), 0.0, 0.0)
    assert nb == pytest.approx(0.1 * math.log(1.1 / 0.1), rel=1e-14)
    assert nb == pytest.approx(0.239790, abs=1e-6)


def test_loss_grad_examples():
    assert loss_grad(LossFn("logistic"), 1.0, 0.0) == pytest.approx(-0.5)
    assert loss_grad(LossFn("quantile", tau=0.3), 5.0, 0.0) == pytest.approx(-0.3)
    assert loss_grad(LossFn("nbr", eta=0.1), 3.0, 0.0) == pytest.approx(3.1 / 1.1 - 3, rel=1e-14)
    # kink convention: rho'(0) = tau - 1
    assert loss_grad(LossFn("quantile", tau=0.3), 1.0, 1.0) == pytest.approx(0.7)


@pytest.mark.parametrize("loss", [LossFn("quantile", tau=0.3), LossFn("logistic"),
                                  LossFn("nbr", eta=0.1), LossFn("nbr", eta=5.0)], ids=str)
def test_loss_grad_matches_fd(loss):
    rng = np.random.default_rng(2)
    for _ in range(100):
        s = rng.normal(0, 3)
        if loss.kind == "logistic":
            y = float(rng.integers(0, 2))
        elif loss.kind == "nbr":
            y = float(rng.poisson(3))
        else:
            y = s + rng.choice([-1, 1]) * rng.uniform(0.1, 3)
        h = 1e-6 * max(1.0, abs(s))
        fd = (loss_value(loss, y, s + h) - loss_value(loss, y, s - h)) / (2 * h)
        g = loss_grad(loss, y, s)
        assert abs(g - fd) <= 1e-5 * max(1.0, abs(fd))


def test_extreme_scores_stay_finite():
    for loss in (LossFn("logistic"), LossFn("nbr", eta=0.1)):
        for s in (-800.0, 800.0):
            assert math.isfinite(loss_value(loss, 1.0, s))
            assert math.isfinite(loss_grad(loss, 1.0, s))
    assert loss_value(LossFn("logistic"), 1.0, 800.0) == pytest.approx(0.0, abs=1e-300)


def test_domain_errors():
    with pytest.raises(ValueError):
        loss_value(LossFn("logistic"), 0.5, 0.0)
    with pytest.raises(ValueError):
        loss_value(LossFn("nbr", eta=1.0), -1.0, 0.0)
    with pytest.raises(ValueError):
        loss_value(LossFn("nbr", eta=1.0), 1.5, 0.0)
    with pytest.raises(ValueError):
        LossFn("quantile", tau=1.0)
    with pytest.raises(ValueError):
        LossFn("nbr", eta=0.0)


def test_lipschitz_H_examples():
    assert lipschitz_H(LossFn("quantile", tau=0.5), 0.0, 1.0) == pytest.approx(1.5)
    assert lipschitz_H(LossFn("logistic"), 1.0, 3.0) == pytest.approx(6.0)
    assert lipschitz_H(LossFn("nbr", eta=0.1), 4.0, 2.0) == pytest.approx(8.2)
    assert LossFn("quantile", tau=0.2).l_tau == pytest.approx(1.8)


@settings(max_examples=200, deadline=None)
@given(y=st.sampled_from([0.0, 1.0]), s1=st.floats(-20, 20), s2=st.floats(-20, 20),
       r=st.floats(0, 10))
def test_logistic_envelope(y, s1, s2, r):
    # |l(y, x'a) - l(y, x'b)| <= |s1 - s2| and |s_i| <= ||x|| r; envelope 2||x|| covers r = 1
    loss = LossFn("logistic")
    assert abs(loss_value(loss, y, s1) - loss_value(loss, y, s2)) <= abs(s1 - s2) + 1e-12


def test_knight_examples():
    assert knight_identity_check(0.5, 1.0, 0.0) == 0.0
    assert knight_identity_check(0.3, 2.0, 5.0) <= 1e-14
    assert knight_identity_check(0.7, -1.0, -3.0) <= 1e-14


@settings(max_examples=300, deadline=None)
@given(tau=st.floats(0.01, 0.99), u=st.floats(-50, 50), v=st.floats(-50, 50))
def test_knight_property(tau, u, v):
    assert knight_identity_check(tau, u, v) <= 1e-12


def test_knight_against_numeric_integral():
    # independent oracle: midpoint quadrature of the indicator integrand
    from scipy.integrate import quad
    for u, v in [(0.3, 1.2), (-0.4, 2.0), (0.5, -1.0), (-1.0, -0.2)]:
        integrand = lambda s: float(u <= s) - float(u <= 0)
        num, _ = quad(integrand, 0, v, points=[u], limit=200)
        rho = lambda z: z * (0.4 - (z < 0))
        lhs = rho(u - v) - rho(u)
        assert lhs == pytest.approx(-v * (0.4 - (u < 0)) + num, abs=1e-9)


def test_parse_loss():
    assert parse_loss("quantile:0.25") == LossFn("quantile", tau=0.25)
    assert parse_loss("nbr:0.1") == LossFn("nbr", eta=0.1)
    assert parse_loss("logistic") == LossFn("logistic")
    assert str(parse_loss("nbr:0.1")) == "nbr:0.1"
    with pytest.raises(ValueError):
        parse_loss("huber")
