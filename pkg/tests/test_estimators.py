import math
import warnings

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from varbesov.adaptive import plan_budget
from varbesov.bspline import eval_tensor
from varbesov.errors import PreconditionError
from varbesov.estimators import (
    RegressionSample, covering_bound, empirical_risk, fit_adaptive_ls, fit_kernel_ridge,
    oracle_risk_bound, terms_for_sample_size,
)
from varbesov.quasi_interp import Layer, SplineExpansion
from varbesov.relunet import NetworkStats
from varbesov.smoothness import BesovParams, SmoothnessProfile

FLAT1 = SmoothnessProfile(1.0, 0.0, 1.0, (0.5,))
PAR1 = BesovParams(2.0, 2.0, 2.0, 1)


def _budget(N=32, prof=FLAT1, par=PAR1):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return plan_budget(N, prof, par, m=2)


def _span_target(seed=0):
    b = _budget()
    r = np.random.default_rng(seed)
    k = b.k_bar
    return SplineExpansion(2, 1, [Layer(k, (-2,), 0.4 * r.standard_normal(2 ** k + 2))])


def test_realizable_noiseless():
    f = _span_target()
    X = np.random.default_rng(1).random((4000, 1))
    s = RegressionSample(X, f(X), 0.0, 1)
    est = fit_adaptive_ls(s, FLAT1, PAR1, _budget(), F=10.0, ridge=1e-12)
    assert np.max(np.abs(est(X) - s.Y)) <= 1e-8
    risk, _ = empirical_risk(est, f, M=20_000, seed=3)
    assert risk <= 1e-6


def test_default_ridge_realizable():
    f = _span_target(2)
    X = np.random.default_rng(2).random((4000, 1))
    s = RegressionSample(X, f(X), 0.0, 2)
    est = fit_adaptive_ls(s, FLAT1, PAR1, _budget())
    assert est.info["ridge"] == pytest.approx(1e-8 * 4000)
    assert empirical_risk(est, f, M=20_000)[0] <= 1e-6


def test_clipping_saturates():
    f = lambda x: 3.0 * np.sin(2 * np.pi * x[:, 0])
    X = np.random.default_rng(0).random((2000, 1))
    s = RegressionSample(X, f(X))
    est = fit_adaptive_ls(s, FLAT1, PAR1, _budget(), F=1.0)
    x = np.linspace(0, 1, 1001)[:, None]
    y = est(x)
    assert np.max(np.abs(y)) == 1.0
    assert np.all(y[f(x) > 1.2] == 1.0) and np.all(y[f(x) < -1.2] == -1.0)
    with pytest.raises(PreconditionError):
        fit_adaptive_ls(s, FLAT1, PAR1, _budget(), F=0.5)


def test_clipping_never_increases_risk():
    f = lambda x: np.sign(x[:, 0] - 0.5) * 0.9
    X = np.random.default_rng(5).random((300, 1))
    s = RegressionSample(X, f(X) + 0.5 * np.random.default_rng(6).standard_normal(300), 0.5)
    est = fit_adaptive_ls(s, FLAT1, PAR1, _budget(), F=1.0)
    x = np.random.default_rng(7).random((20_000, 1))
    assert np.mean((f(x) - est(x)) ** 2) <= np.mean((f(x) - est.raw(x)) ** 2)


def _design(est, X):
    cols, coef = [], []
    for k, j, a in est.approx.outer.terms():
        cols.append(eval_tensor(2, k, j, X))
        coef.append(a)
    return np.array(cols).T, np.array(coef)


def test_ls_optimality_under_perturbation():
    r = np.random.default_rng(11)
    X = r.random((500, 1))
    Y = np.cos(5 * X[:, 0]) + 0.3 * r.standard_normal(500)
    est = fit_adaptive_ls(RegressionSample(X, Y, 0.3), FLAT1, PAR1, _budget(), F=100.0)
    B, c = _design(est, X)
    assert np.allclose(B @ c, est.raw(X), atol=1e-12)
    base = np.sum((Y - B @ c) ** 2)
    for _ in range(100):
        v = r.standard_normal(c.size)
        v *= 1e-3 / np.linalg.norm(v)
        assert base <= np.sum((Y - B @ (c + v)) ** 2)


def test_adaptive_ls_deterministic():
    r = np.random.default_rng(3)
    X = r.random((400, 2))
    Y = np.sin(4 * X[:, 0]) * X[:, 1]
    prof = SmoothnessProfile(1.0, 2.0, 0.5, (0.5, 0.5))
    par = BesovParams(2.0, 2.0, 2.0, 2)
    b = _budget(64, prof, par)
    e1 = fit_adaptive_ls(RegressionSample(X, Y), prof, par, b)
    e2 = fit_adaptive_ls(RegressionSample(X.copy(), Y.copy()), prof, par, b)
    x = r.random((1000, 2))
    assert np.array_equal(e1(x), e2(x))
    f = lambda z: np.sin(4 * z[:, 0]) * z[:, 1]
    assert empirical_risk(e1, f, seed=4) == empirical_risk(e2, f, seed=4)


def test_regime_ii_fit_runs():
    r = np.random.default_rng(8)
    X = r.random((2000, 1))
    prof = SmoothnessProfile(1.0, 1.0, 1.0, (0.5,))
    par = BesovParams(1.0, 2.0, 2.0, 1)
    b = _budget(16, prof, par)
    est = fit_adaptive_ls(RegressionSample(X, np.abs(X[:, 0] - 0.5) ** 0.7), prof, par, b)
    assert est.approx.mode == "adaptive_ii"
    assert est.info["columns"] >= 2 ** b.k_bar


# kernel ridge

def test_krr_shrinkage_limit():
    f = lambda x: 1.0 + 0.0 * x[:, 0]
    X = np.random.default_rng(0).random((200, 1))
    est = fit_kernel_ridge(RegressionSample(X, f(X)), bandwidth=0.2, lam=1e12)
    x = np.random.default_rng(1).random((1000, 1))
    assert np.max(np.abs(est(x))) < 1e-8
    assert empirical_risk(est, f)[0] == pytest.approx(1.0, abs=1e-6)


def test_krr_interpolates_single_point():
    est = fit_kernel_ridge(RegressionSample([[0.3]], [2.5]), bandwidth=0.1, lam=1e-10)
    assert est(np.array([[0.3]]))[0] == pytest.approx(2.5, rel=1e-8)


def test_krr_linearity():
    r = np.random.default_rng(9)
    X = r.random((150, 2))
    Y1, Y2 = r.standard_normal(150), r.standard_normal(150)
    kw = dict(bandwidth=0.3, lam=1e-2)
    e1 = fit_kernel_ridge(RegressionSample(X, Y1), **kw)
    e2 = fit_kernel_ridge(RegressionSample(X, Y2), **kw)
    e12 = fit_kernel_ridge(RegressionSample(X, Y1 + Y2), **kw)
    eD = fit_kernel_ridge(RegressionSample(X, 2 * Y1), **kw)
    x = r.random((500, 2))
    assert np.array_equal(eD(x), 2 * e1(x))
    # superposition holds up to floating-point summation order
    assert np.allclose(e12(x), e1(x) + e2(x), rtol=0, atol=1e-10)


def test_krr_lambda_selection_logged():
    X = np.random.default_rng(2).random((300, 1))
    est = fit_kernel_ridge(RegressionSample(X, np.sin(6 * X[:, 0])))
    assert est.info["bandwidth_rule"] == "median"
    assert est.lam in (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
    with pytest.raises(PreconditionError):
        fit_kernel_ridge(RegressionSample(X, X[:, 0]), bandwidth=0.1, lam=-1.0)


# risk and bounds

class _Const:
    def __init__(self, c, d=1):
        self.c, self.X = c, np.zeros((1, d))

    def __call__(self, x):
        return np.full(len(x), self.c)


def test_empirical_risk_examples():
    f = lambda x: np.sin(3 * x[:, 0])
    class Same(_Const):
        def __call__(self, x):
            return f(x)
    assert empirical_risk(Same(0), f)[0] == 0.0
    assert empirical_risk(_Const(0.0), lambda x: np.full(len(x), 0.7))[0] == pytest.approx(0.49)
    with pytest.raises(PreconditionError):
        empirical_risk(_Const(0.0), f, M=0)


def test_empirical_risk_matches_quadrature():
    f = lambda x: np.sin(3 * x[:, 0]) + x[:, 0] ** 2
    est = _Const(0.2)
    mean, se = empirical_risk(est, f, M=20_000, seed=1)
    g, w = np.polynomial.legendre.leggauss(60)
    x = (g + 1) / 2
    quad = float(np.sum(w / 2 * (f(x[:, None]) - 0.2) ** 2))
    assert abs(mean - quad) <= 3 * se


def test_covering_bound_examples():
    assert covering_bound(NetworkStats(5, 5, 0, 3.0), 0.1) == 0.0
    mp.mp.dps = 40
    want = 2 * 1000 * 10 * mp.log(10 * 101) + 1000 * mp.log(mp.mpf(10) / mp.mpf("0.01"))
    got = covering_bound(NetworkStats(10, 100, 1000, 10.0), 0.01)
    assert abs(got - float(want)) <= 1e-10 * float(want)
    assert got == pytest.approx(1.453e5, rel=1e-3)
    with pytest.raises(PreconditionError):
        covering_bound(NetworkStats(1, 1, 1, 1.0), 0.0)


@given(L=st.integers(1, 50), W=st.integers(1, 500), S=st.integers(1, 10 ** 5),
       B=st.floats(0.1, 1e4), delta=st.floats(1e-6, 1.0))
def test_covering_bound_monotone(L, W, S, B, delta):
    base = covering_bound(NetworkStats(L, W, S, B), delta)
    assert covering_bound(NetworkStats(L + 1, W, S, B), delta) >= base
    assert covering_bound(NetworkStats(L, W + 1, S, B), delta) >= base
    assert covering_bound(NetworkStats(L, W, S + 1, B), delta) >= base
    assert covering_bound(NetworkStats(L, W, S, 2 * B), delta) >= base
    assert covering_bound(NetworkStats(L, W, S, B), delta / 2) >= base


def test_oracle_bound_examples():
    assert oracle_risk_bound(0, 0, 1, 0, 0, 0) == 0.0
    assert oracle_risk_bound(0.1, 100, 10 ** 4, 1, 1, 1e-4) == pytest.approx(0.0302, rel=1e-12)
    a = oracle_risk_bound(0, 100, 1000, 1, 1, 0)
    assert oracle_risk_bound(0, 100, 500, 1, 1, 0) == 2 * a
    with pytest.raises(PreconditionError):
        oracle_risk_bound(-1, 0, 1, 0, 0, 0)


def test_terms_for_sample_size():
    assert terms_for_sample_size(10 ** 4, 1.0, 1) == round(10 ** (4 / 3))
    assert terms_for_sample_size(4, 1.0, 2) == 4


def test_sample_csv_header():
    s = RegressionSample([[0.1, 0.2]], [1.5])
    lines = s.to_csv().splitlines()
    assert lines[0] == "# varbesov-csv v1" and lines[1] == "x_1,x_2,y"
    assert math.isclose(float(lines[2].split(",")[2]), 1.5)
