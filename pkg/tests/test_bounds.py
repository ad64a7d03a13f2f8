import math

import numpy as np
import pytest

from logtrunc.bounds import (BoundInputs, DnnBlock, covering_log_bound, depth_sample_ok, dnn_bound,
                             excess_bound_thm1, excess_bound_thm2, l2_bound_corollary,
                             qr_hetero_bound, theorem1_alphas)
from logtrunc.truncation import HighOrderFn

# eps=1, n=1000, p=10, delta=0.05, r=10, sup_risk=EH=EH_pow=1; 40-digit mpmath evaluation
GOLDEN_THM2 = 1.124640860127151882714696508035120342549


def inputs(**kw):
    base = dict(n=1000, p=10, epsilon=1.0, delta=0.05, r=10.0, sup_risk=1.0, EH=1.0, EH_pow=1.0)
    base.update(kw)
    return BoundInputs(**base)


def test_covering_log_bound():
    assert covering_log_bound(1, 0.5, 0.5) == pytest.approx(math.log(3))
    assert covering_log_bound(20, 3, 0.1) == pytest.approx(2 * covering_log_bound(10, 3, 0.1))
    assert covering_log_bound(100, 10, 1 / 200) == pytest.approx(100 * math.log(4001), rel=1e-14)
    with pytest.raises(ValueError):
        covering_log_bound(0, 1, 1)


def test_thm2_golden():
    assert excess_bound_thm2(inputs()) == pytest.approx(GOLDEN_THM2, rel=1e-13)


def test_thm2_zero_moments_leave_sup_risk_term():
    inp = inputs(EH=0.0, EH_pow=0.0, sup_risk=2.0)
    e, n = 1.0, 1000
    B = math.log(400) + 10 * math.log1p(20000)
    expect = n ** -0.5 * (B / 3) ** 0.5 * 2 * 3 * 2.0 ** 0.5
    assert excess_bound_thm2(inp) == pytest.approx(expect, rel=1e-13)


@pytest.mark.parametrize("kind", ["chen", "lee", "lam", "minsker"])
def test_thm1_power_equals_thm2_after_coefficient(kind):
    # thm2 is stated for chen; other power laws match once E lambda(H) is scaled alike
    for n in (100, 10_000, 1_000_000):
        for p in (1, 10, 100):
            for eps in (0.25, 0.5, 1.0):
                inp = inputs(n=n, p=p, epsilon=eps, EH=2.0, EH_pow=3.0)
                chen = HighOrderFn("chen", eps)
                t1 = excess_bound_thm1(inp, chen)
                assert t1 == pytest.approx(excess_bound_thm2(inp), rel=1e-10)
    assert excess_bound_thm1(inputs(), HighOrderFn(kind, 1.0)) == pytest.approx(
        excess_bound_thm2(inputs()), rel=1e-10)


def test_thm1_literal_lower_alpha():
    inp = inputs()
    lo, hi = theorem1_alphas(inp, HighOrderFn("chen", 1.0), literal_lower=True)
    assert lo < hi
    lo2, hi2 = theorem1_alphas(inp, HighOrderFn("chen", 1.0))
    assert lo2 == hi2 == hi
    assert excess_bound_thm1(inp, HighOrderFn("chen", 1.0), literal_lower=True) > excess_bound_thm1(
        inp, HighOrderFn("chen", 1.0))


def test_thm1_consistency_and_additivity():
    lam = HighOrderFn("chen", 0.5)
    assert excess_bound_thm1(inputs(n=10 ** 6), lam) < excess_bound_thm1(inputs(n=10 ** 3), lam)
    a = excess_bound_thm1(inputs(EH=1.0), lam)
    b = excess_bound_thm1(inputs(EH=2.0), lam)
    assert b - a == pytest.approx(2.0 * 1.0 / 1000, rel=1e-9)


def test_thm1_xu_needs_expectation():
    lam = HighOrderFn("xu", m=3)
    with pytest.raises(ValueError):
        excess_bound_thm1(inputs(), lam)
    assert excess_bound_thm1(inputs(E_lambda_H=1.0), lam) > 0


def test_sup_risk_must_be_positive():
    with pytest.raises(ValueError):
        excess_bound_thm2(inputs(sup_risk=0.0))


def test_rate_shape():
    for eps in (0.5, 1.0):
        for n in (10 ** 4, 10 ** 5):
            ratio = excess_bound_thm2(inputs(n=n, epsilon=eps)) / excess_bound_thm2(inputs(n=4 * n, epsilon=eps))
            target = 4 ** (eps / (1 + eps))
            assert abs(ratio / target - 1) <= 0.2


def test_monotonicity():
    ns = [10 ** 3, 10 ** 4, 10 ** 5, 10 ** 6]
    for f in (lambda i: excess_bound_thm2(i), lambda i: excess_bound_thm1(i, HighOrderFn("lam", 0.5))):
        vals = [f(inputs(n=n, epsilon=0.5)) for n in ns]
        assert all(v > 0 for v in vals) and all(b < a for a, b in zip(vals, vals[1:]))
        assert f(inputs(p=20)) > f(inputs(p=10))
        assert f(inputs(r=20.0)) > f(inputs(r=10.0))
        assert f(inputs(delta=0.01)) > f(inputs(delta=0.05))


def test_l2_corollary():
    inp = inputs(c_l=1.0)
    ex = excess_bound_thm2(inp)
    assert l2_bound_corollary(inp, ex) == ex
    assert l2_bound_corollary(inputs(c_l=2.0), ex) == pytest.approx(ex / 2)
    with pytest.raises(ValueError):
        l2_bound_corollary(inputs(), ex)


def test_l2_quantile_specialisation():
    # quantile display with H = l_tau ||x||: divide every term by c_f * c_Sigma
    tau, c_f, c_sig, n, p, eps = 0.3, 0.4, 0.9, 5000, 8, 0.5
    EX, EX_pow, S = 2.0, 3.0, 1.5
    l_tau = max(1 + tau, 2 - tau)
    inp = BoundInputs(n=n, p=p, epsilon=eps, delta=0.05, r=10.0, sup_risk=S,
                      EH=l_tau * EX, EH_pow=l_tau ** (1 + eps) * EX_pow, c_l=c_f * c_sig)
    got = l2_bound_corollary(inp, excess_bound_thm2(inp))
    C = ((math.log(0.05 ** -2) + p * math.log(1 + 2 * 10 * n)) / (2 ** eps + 1)) ** (eps / (1 + eps))
    bracket = (2 * (2 ** eps + 1) * S ** (1 / (1 + eps))
               + 2 ** eps * (l_tau / n) ** (1 + eps) * EX_pow / ((1 + eps) * S ** (eps / (1 + eps))))
    expect = 2 * l_tau * EX / (c_f * c_sig * n) + C / (c_f * c_sig * n ** (eps / (1 + eps))) * bracket
    assert got == pytest.approx(expect, rel=1e-12)


def test_dnn_bound():
    blk = DnnBlock(L=2, M=1.0, K=5.0, ED=1.0, ED_pow=1.0)
    inp = inputs(dnn=blk)
    val, ok = dnn_bound(inp)
    h = 2 * math.sqrt(2)
    ref = excess_bound_thm2(inputs(r=5.0, EH=h, EH_pow=h ** 2))
    assert val == pytest.approx(ref, rel=1e-14) and ok
    vals = [dnn_bound(inputs(dnn=DnnBlock(L=L, M=1.5, K=5.0, ED=1.0, ED_pow=1.0)))[0] for L in (1, 2, 3, 4)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        dnn_bound(inputs(dnn=DnnBlock(L=0, M=1.0, K=1.0, ED=1.0, ED_pow=1.0)))
    with pytest.raises(ValueError):
        dnn_bound(inputs())


def test_depth_sample_condition():
    assert depth_sample_ok(DnnBlock(L=2, M=1.0, K=1, ED=1, ED_pow=1), n=100, epsilon=1.0)
    assert not depth_sample_ok(DnnBlock(L=20, M=3.0, K=1, ED=1, ED_pow=1), n=100, epsilon=1.0)


def test_qr_hetero_bound():
    n, p, d, r = 1000, 5, 0.05, 10.0
    root = math.sqrt(2 * (math.log(d ** -2) + p * math.log1p(2 * r * n)) / n)
    val = qr_hetero_bound(n, p, d, r, 0.5, 0.0, 0.0, sigma_R=2.0)
    assert val == pytest.approx(math.sqrt(3) * 2.0 * root, rel=1e-2)
    v1 = qr_hetero_bound(n, p, d, r, 0.5, 1.0, 0.0, sigma_R=1e-300 + 1.0)
    v0 = qr_hetero_bound(n, p, d, r, 0.5, 0.0, 0.0, sigma_R=1.0)
    assert v1 - v0 == pytest.approx(2 * 1.5 / n, rel=1e-9)
    a = qr_hetero_bound(10_000, p, d, r, 0.5, 0.0, 0.0, 1.0)
    b = qr_hetero_bound(20_000, p, d, r, 0.5, 0.0, 0.0, 1.0)
    assert a / b == pytest.approx(math.sqrt(2), rel=0.05)
    with pytest.raises(ValueError):
        qr_hetero_bound(n, p, d, r, 1.5, 0.0, 0.0, 1.0)


def test_input_validation():
    with pytest.raises(ValueError):
        inputs(delta=0.6)
    with pytest.raises(ValueError):
        inputs(epsilon=1.5)
    with pytest.raises(ValueError):
        inputs(EH=-1.0)
