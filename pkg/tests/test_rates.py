import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from varbesov.errors import PreconditionError
from varbesov.rates import (
    RateSpec, approx_curve_variable, estimation_curve_fixed, estimation_curve_variable,
    fit_slope, linear_lower_curve, nu_estimation, rate_table,
)


def _oracle_variable(n, s, d, a, nu):
    mp.mp.dps = 50
    n, s, d, a, nu = (mp.mpf(v) for v in (n, s, d, a, nu))
    ln = mp.log(n)
    return (n ** (-2 * s / (2 * s + d)) * ln ** (-2 * (s * d - nu * d - 3 * a * s) / ((2 * s + d) * a))
            * mp.log(ln) ** (2 * d * (s - nu) / ((2 * s + d) * a)))


def test_variable_example():
    v = estimation_curve_variable(1e6, 1, 5, 0.2, 0)
    assert v == pytest.approx(1.3e-6, rel=0.01)
    assert abs(v - float(_oracle_variable(10 ** 6, 1, 5, "0.2", 0))) <= 1e-12 * v


@given(n=st.floats(16, 1e9), s=st.floats(0.2, 5), d=st.integers(1, 20), a=st.floats(0.05, 5),
       nu=st.floats(0, 1))
def test_variable_against_oracle(n, s, d, a, nu):
    got = estimation_curve_variable(n, s, d, a, nu)
    want = float(_oracle_variable(n, s, d, a, nu))
    assert got == pytest.approx(want, rel=1e-9)


def test_variable_degenerate_exponents():
    s, d, n = 1.0, 3, 1e5
    # nu = s kills the loglog factor
    v = estimation_curve_variable(n, s, d, 0.5, nu=s)
    want = n ** (-2 * s / (2 * s + d)) * math.log(n) ** (2 * 3 * 0.5 * s / ((2 * s + d) * 0.5))
    assert v == pytest.approx(want, rel=1e-12)
    # alpha = (s d - nu d) / (3 s) kills the log factor
    nu = 0.25
    a = (s * d - nu * d) / (3 * s)
    v = estimation_curve_variable(n, s, d, a, nu=nu)
    want = n ** (-2 * s / (2 * s + d)) * math.log(math.log(n)) ** (2 * d * (s - nu) / ((2 * s + d) * a))
    assert v == pytest.approx(want, rel=1e-12)
    assert estimation_curve_variable(n, s, d, math.inf) == pytest.approx(n ** (-2 / 5))


def test_improvement_exponent_grows_with_d():
    s, a = 1.0, 0.2
    imp = [2 * (s * d - 3 * a * s) / ((2 * s + d) * a) for d in (2, 4, 8, 16)]
    assert all(x < y for x, y in zip(imp, imp[1:]))
    n = 1e6
    ratio = [estimation_curve_variable(n, s, d, a) / estimation_curve_fixed(s, d, n) for d in (2, 4, 8, 16)]
    assert all(x > y for x, y in zip(ratio, ratio[1:]))


def test_variable_small_n():
    with pytest.raises(PreconditionError):
        estimation_curve_variable(10, 1, 1, 1)


def test_fixed_examples():
    assert estimation_curve_fixed(1.0, 5, 1) == 1.0
    e = [math.log(estimation_curve_fixed(1.0, d, 1e6)) / math.log(1e6) for d in (1, 10, 100, 1000)]
    assert all(x < y for x, y in zip(e, e[1:])) and e[-1] > -0.01
    n = np.logspace(3, 6, 10)
    var = estimation_curve_variable(n, 1, 15, 0.2)
    assert np.all(var < estimation_curve_fixed(1, 15, n))


def test_approx_curve_examples():
    assert approx_curve_variable(2.0 ** 20, 2, 4, math.inf) == pytest.approx(2.0 ** -10)
    assert approx_curve_variable(2.0 ** 20, 2, 4, 0.5, delta=2) == pytest.approx(2.0 ** -10)
    mp.mp.dps = 40
    N = mp.mpf(2) ** 20
    want = N ** (-mp.mpf(2) / 4) * (mp.log(N) / mp.log(mp.log(N))) ** (-2 / mp.mpf("0.5"))
    assert approx_curve_variable(2.0 ** 20, 2, 4, 0.5) == pytest.approx(float(want), rel=1e-12)
    with pytest.raises(PreconditionError):
        approx_curve_variable(8, 1, 1, 1)


def test_linear_lower_examples():
    n = np.logspace(2, 8, 7)
    assert np.allclose(linear_lower_curve(n, 1.5, 0.0, 2), estimation_curve_fixed(1.5, 2, n))
    nu = nu_estimation(1, 1.0)
    assert nu == 0.5
    sn = 1.0 - nu
    assert linear_lower_curve(1e4, 1.0, nu, 1) == pytest.approx(1e4 ** (-2 * sn / (2 * sn + 1)))
    with pytest.raises(PreconditionError):
        linear_lower_curve(1e4, 0.5, 0.5, 1)


def test_deep_below_linear_for_large_n():
    s, d, a, p = 1.0, 1, 1.0, 1.0
    nu = nu_estimation(d, p)
    n = np.logspace(2, 30, 200)
    ratio = estimation_curve_variable(n, s, d, a, nu) / linear_lower_curve(n, s, nu, d)
    assert ratio[-1] < 1
    if ratio[0] > 1:
        cross = n[np.argmax(ratio < 1)]
        assert np.all(ratio[n >= cross] < 1)


def test_fit_slope_examples():
    x = np.logspace(1, 4, 20)
    sl, _, r2 = fit_slope(x, x ** -2.0)
    assert abs(sl + 2) <= 1e-12 and r2 == pytest.approx(1.0)
    assert abs(fit_slope(x, np.full(20, 3.0))[0]) <= 1e-12
    x = np.logspace(2, 6, 30)
    sl = fit_slope(x, np.log(x) / x)[0]
    assert -1 < sl < -0.85
    with pytest.raises(PreconditionError):
        fit_slope([1, 2], [1, 2])
    with pytest.raises(PreconditionError):
        fit_slope([1, 2, 3], [1, 0, 2])
    with pytest.raises(PreconditionError):
        fit_slope([1, 1, 3], [1, 2, 2])


@given(s=st.floats(0.3, 4), d=st.integers(1, 20), a=st.floats(0.05, 3), p=st.sampled_from([1.0, 2.0]))
def test_curves_positive_and_decreasing(s, d, a, p):
    spec = RateSpec(s, d, a, p=p, n_min=1e4, n_max=1e12, points=15)
    rows = rate_table(spec)
    for kind in {k for _, k, _ in rows}:
        vals = np.array([v for _, k, v in rows if k == kind])
        assert np.all(vals > 0)
        if kind != "deep_variable":
            assert np.all(np.diff(vals) < 0)


def test_variable_curve_decreasing_far_out():
    n = np.logspace(6, 40, 60)
    v = estimation_curve_variable(n, 1.0, 15, 0.2)
    assert np.all(np.diff(v) < 0)


def test_rate_table_deterministic_and_spec_checks():
    spec = RateSpec(1.0, 15, 0.2)
    assert rate_table(spec) == rate_table(RateSpec(1.0, 15, 0.2))
    kinds = [k for _, k, _ in rate_table(spec)]
    assert kinds.count("deep_variable") == 31
    with pytest.raises(PreconditionError):
        RateSpec(1.0, 1, 1.0, n_min=10)
