import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from logtrunc.truncation import (KINDS, HighOrderFn, c1_constants, lambda_eval, parse_high_order,
                                 psi_deriv, psi_eval, verify_sandwich)


def all_fns(eps_values=(0.3, 0.5, 1.0)):
    out = []
    for kind in KINDS:
        for eps in eps_values:
            out.append(HighOrderFn(kind, epsilon=eps, m=4) if kind == "xu"
                       else HighOrderFn(kind, epsilon=eps))
    return out


# ---- frozen examples

def test_lambda_examples():
    assert lambda_eval(HighOrderFn("catoni"), 2.0) == pytest.approx(2.0, abs=1e-15)
    assert lambda_eval(HighOrderFn("chen", 1.0), 2.0) == pytest.approx(2.0, abs=1e-15)
    assert lambda_eval(HighOrderFn("chen", 0.5), 1.0) == pytest.approx(2.0 / 3.0, rel=1e-15)
    minsker = max(0.5 / 1.5, math.sqrt(0.5 / 1.5))
    assert lambda_eval(HighOrderFn("minsker", 0.5), 1.0) == pytest.approx(minsker, rel=1e-15)


def test_power_coefficients_by_continuity_at_eps_one():
    # lee, lam and minsker all reduce to 1/2 at eps = 1 (0**0 taken as 1)
    for kind in ("lee", "lam", "minsker", "chen", "catoni"):
        assert HighOrderFn(kind, 1.0).coef == pytest.approx(0.5, rel=1e-14)


def test_xu_series_value_and_derivative():
    fn = HighOrderFn("xu", m=4)
    x = 1.7
    assert lambda_eval(fn, x) == pytest.approx(x ** 2 / 2 + x ** 3 / 6 + x ** 4 / 24, rel=1e-14)
    assert float(fn.deriv(x)) == pytest.approx(x + x ** 2 / 2 + x ** 3 / 6, rel=1e-14)


def test_lambda_domain_errors():
    fn = HighOrderFn("chen", 1.0)
    with pytest.raises(ValueError):
        lambda_eval(fn, -1.0)
    with pytest.raises(ValueError):
        lambda_eval(fn, math.nan)
    with pytest.raises(ValueError):
        psi_eval(fn, math.inf)
    with pytest.raises(ValueError):
        HighOrderFn("chen", 0.0)
    with pytest.raises(ValueError):
        HighOrderFn("nope")
    with pytest.raises(ValueError):
        HighOrderFn("xu", m=1)


def test_psi_examples():
    for fn in all_fns():
        assert psi_eval(fn, 0.0) == 0.0
    assert psi_eval(HighOrderFn("catoni"), 1.0) == pytest.approx(math.log(2.5), rel=1e-15)
    assert psi_eval(HighOrderFn("catoni"), 1.0) == pytest.approx(0.916291, abs=1e-6)
    assert psi_eval(HighOrderFn("chen", 1.0), -1.0) == pytest.approx(-math.log(2.5), rel=1e-15)


def test_psi_deriv_examples():
    fn = HighOrderFn("chen", 1.0)
    assert psi_deriv(fn, 0.0) == 1.0
    assert psi_deriv(fn, 3.0) == pytest.approx(4.0 / 8.5, rel=1e-15)
    assert psi_deriv(fn, 3.0) == pytest.approx(0.470588, abs=1e-6)


@pytest.mark.parametrize("fn", [f for f in all_fns() if f.is_power], ids=str)
def test_psi_deriv_matches_fd_at_ten(fn):
    x, h = 10.0, 1e-6 * 10.0
    fd = (psi_eval(fn, x + h) - psi_eval(fn, x - h)) / (2 * h)
    assert psi_deriv(fn, x) == pytest.approx(fd, rel=1e-6)


def test_small_argument_is_accurate():
    fn = HighOrderFn("chen", 1.0)
    x = 1e-10
    assert psi_eval(fn, x) == pytest.approx(x, rel=1e-9)


def test_c1_constants():
    c = c1_constants(HighOrderFn("chen", 1.0))
    assert c.c2 == 2.0 and float(c.f(3.0)) == pytest.approx(9.0)
    assert c1_constants(HighOrderFn("chen", 0.5)).c2 == pytest.approx(2 ** 0.5)
    c = c1_constants(HighOrderFn("catoni"))
    assert c.c2 == 2.0 and float(c.f(0.5)) == pytest.approx(0.25)
    xu = c1_constants(HighOrderFn("xu", m=3))
    assert xu.c2 == 4.0
    for v in (1e-6, 0.3, 1.0, 7.0, 1e5):
        assert float(xu.f(xu.f_inv(v))) == pytest.approx(v, rel=1e-12)


@pytest.mark.parametrize("fn", all_fns(), ids=str)
def test_weak_triangle_and_homogeneity(fn):
    rng = np.random.default_rng(1)
    x, y = rng.exponential(2.0, 10_000), rng.exponential(2.0, 10_000)
    t = rng.uniform(0, 3, 10_000)
    c = c1_constants(fn)
    lam = fn.value
    assert np.all(lam(x + y) <= c.c2 * (lam(x) + lam(y)) * (1 + 1e-12) + 1e-300)
    assert np.all(lam(t * x) <= c.f(t) * lam(x) * (1 + 1e-12) + 1e-300)


def test_sandwich_examples():
    assert verify_sandwich(HighOrderFn("chen", 1.0), 100_000).passed
    assert verify_sandwich(HighOrderFn("lam", 0.3), 100_000).passed
    fn = HighOrderFn("catoni")
    assert psi_eval(fn, 0.0) == 0.0
    assert math.log(1 + 0 + lambda_eval(fn, 0.0)) == 0.0


def test_parse_high_order():
    assert parse_high_order("xu:4") == HighOrderFn("xu", m=4)
    assert parse_high_order("chen:0.5") == HighOrderFn("chen", 0.5)
    assert parse_high_order("Catoni") == HighOrderFn("catoni")


# ---- properties

finite = st.floats(min_value=-1e8, max_value=1e8, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(x=finite, kind=st.sampled_from(KINDS), eps=st.sampled_from([0.3, 0.5, 1.0]))
def test_oddness(x, kind, eps):
    fn = HighOrderFn(kind, epsilon=eps, m=3)
    assert psi_eval(fn, -x) == -psi_eval(fn, x)


@settings(max_examples=200, deadline=None)
@given(a=finite, b=finite, kind=st.sampled_from(KINDS))
def test_monotone(a, b, kind):
    fn = HighOrderFn(kind, epsilon=0.5, m=3)
    lo, hi = min(a, b), max(a, b)
    assert psi_eval(fn, lo) <= psi_eval(fn, hi)


@settings(max_examples=200, deadline=None)
@given(x=st.floats(min_value=0, max_value=50), kind=st.sampled_from(KINDS))
def test_small_scale_linearity(x, kind):
    fn = HighOrderFn(kind, epsilon=0.5, m=3)
    assert abs(psi_eval(fn, x) - x) <= lambda_eval(fn, x) + x * x / 2 + 1e-12


@pytest.mark.parametrize("alpha", [1e-2, 1e-4, 1e-6])
def test_alpha_to_zero_recovers_identity(alpha):
    fn = HighOrderFn("chen", 1.0)
    z = np.linspace(-100, 100, 401)
    gap = np.abs(np.asarray(psi_eval(fn, alpha * z)) / alpha - z)
    bound = (fn.value(alpha * np.abs(z)) + (alpha * z) ** 2 / 2) / alpha
    assert np.all(gap <= bound + 1e-9)
    assert gap.max() <= 1e4 * alpha + 1e-9


def test_lambda_superlinear_and_monotone():
    grid = np.geomspace(1e-3, 1e6, 200)
    for fn in all_fns():
        v = fn.value(grid)
        assert np.all(np.diff(v) >= 0)
        assert v[-1] / grid[-1] > 10 * v[len(v) // 2] / grid[len(v) // 2]
