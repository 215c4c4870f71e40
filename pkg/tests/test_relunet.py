import json
import math

import mpmath as mp
import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from varbesov.adaptive import PiecewiseSplineApprox
from varbesov.bspline import eval_tensor
from varbesov.errors import PreconditionError
from varbesov.quasi_interp import Layer, SplineExpansion
from varbesov.relunet import (
    ReluNetwork, build_bspline, build_indicator, build_mult, build_square, c_dm, clip,
    compile_approx, bspline_net_budget,
)
from varbesov.relunet.compiler import W1, eps_admissible
from varbesov.relunet.network import affine
from varbesov.smoothness import BesovParams, SmoothnessProfile


def _relu_shift(c):
    return ReluNetwork(1, [(sp.csr_matrix([[1.0]]), [-c]), (sp.csr_matrix([[1.0]]), [0.0])])


def test_eval_examples():
    assert affine(1, [1.0])(0.3) == 0.3
    assert _relu_shift(0.5)(0.2) == 0.0
    F = 2.0
    assert clip(affine(1, [1.0]), F)(2 * F) == F


def test_eval_dim_mismatch():
    with pytest.raises(ValueError):
        affine(2, [1.0, 1.0]).eval(np.zeros((3, 3)))


def test_stats_examples():
    empty = ReluNetwork(1, [(sp.csr_matrix((1, 1)), [0.0])])
    assert empty.stats().S == 0
    dense = ReluNetwork(2, [(sp.csr_matrix([[1.0, 2.0], [3.0, -4.0]]), [1.0, 1.0]),
                            (sp.csr_matrix([[1.0, 1.0]]), [0.0])])
    assert dense.stats().W == 2
    first = ReluNetwork(2, [dense.layers[0], (sp.csr_matrix([[0.0, 0.0]]), [0.0])])
    assert first.stats().S == 6
    assert dense.stats().B == 4.0


@pytest.mark.parametrize("y,want", [(4.0, 2.0), (0.0, 0.0), (-6.0, -2.0), (1.3, 1.3)])
def test_clip_examples(y, want):
    net = clip(affine(1, [1.0]), 2.0)
    assert net(y) == pytest.approx(want, abs=1e-15)


def test_clip_idempotent_and_precondition(rng):
    base = ReluNetwork(1, [(sp.csr_matrix([[5.0], [-3.0]]), [-1.0, 2.0]),
                           (sp.csr_matrix([[1.0, -1.5]]), [0.3])])
    x = rng.uniform(-2, 2, (1000, 1))
    once = clip(base, 1.5)
    assert np.array_equal(clip(once, 1.5)(x), once(x))
    assert np.allclose(once(x), np.clip(base(x), -1.5, 1.5), atol=1e-14)
    assert once.depth == base.depth + 2
    assert once.hidden_widths()[-1] == 4
    with pytest.raises(ValueError):
        clip(base, 0.5)


def test_json_format_and_round_trip(rng):
    dense = ReluNetwork(2, [(sp.csr_matrix([[1.0, 0.0], [3.0, -4.0]]), [0.0, 1.0]),
                            (sp.csr_matrix([[1.0, 1.0]]), [0.5])])
    obj = json.loads(dense.dumps())
    lay = obj["layers"][0]
    assert set(lay) == {"rows", "cols", "entries", "bias"}
    assert lay["entries"] == [[0, 0, 1.0], [1, 0, 3.0], [1, 1, -4.0]]
    assert lay["bias"] == [[1, 1.0]]
    back = ReluNetwork.from_json(obj)
    x = rng.random((50, 2))
    assert np.array_equal(back(x), dense(x))


def test_square_examples():
    eps = 2.0 ** -10
    net = build_square(eps)
    assert net(0.0) == 0.0
    assert abs(net(1.0) - 1.0) <= eps
    x = np.linspace(0, 1, 100_001)[:, None]
    assert np.max(np.abs(net(x) - x[:, 0] ** 2)) <= eps


def test_square_precondition():
    with pytest.raises(PreconditionError):
        build_square(1.5)


@pytest.mark.parametrize("D", [2, 3, 4])
def test_mult_accuracy_and_depth(D, rng):
    eps = 1e-2
    net = build_mult(D, eps)
    x = rng.random((20_000, D))
    assert np.max(np.abs(net(x) - np.prod(x, axis=1))) <= eps
    assert abs(net(np.ones(D)) - 1.0) <= eps
    assert net.depth <= math.ceil(math.log2(3 ** D / eps) + 5) * math.ceil(math.log2(D))


def test_mult_examples():
    net = build_mult(2, 1e-2)
    assert net(np.array([0.0, 0.7])) == 0.0
    assert abs(net(np.array([0.5, 0.5])) - 0.25) <= 1e-2


@given(D=st.integers(2, 4), zero=st.integers(0, 3),
       vals=st.lists(st.floats(0, 1), min_size=4, max_size=4))
def test_mult_exact_zero(D, zero, vals):
    x = np.array(vals[:D])
    x[zero % D] = 0.0
    assert build_mult(D, 1e-2)(x) == 0.0


def test_bspline_network_d1m2():
    net = build_bspline(2, 1, 1e-2)
    b = bspline_net_budget(2, 1, 1e-2)
    assert b.W == 50 and b.B == 18
    st_ = net.stats()
    assert st_.W <= 50 and st_.L <= b.L and st_.B <= b.B
    x = np.linspace(-1, 4, 100_001)[:, None]
    want = eval_tensor(2, 0, (0,), x)
    y = net(x)
    assert np.max(np.abs(y - want)) <= 1e-2
    out = (x[:, 0] < 0) | (x[:, 0] > 3)
    assert np.all(y[out] == 0.0)
    assert abs(net(1.5) - eval_tensor(2, 0, (0,), np.array([[1.5]]))[0]) <= 1e-2


def test_bspline_network_d2_budget(rng):
    eps = 1e-2
    net = build_bspline(2, 2, eps)
    b = bspline_net_budget(2, 2, eps)
    s = net.stats()
    assert (s.L, s.W, s.S) <= (b.L, b.W, b.S) and s.W <= b.W and s.S <= b.S and s.B <= b.B
    x = rng.uniform(-1, 4, (100_000, 2))
    want = eval_tensor(2, 0, (0, 0), x)
    y = net(x)
    assert np.max(np.abs(y - want)) <= eps
    out = np.any((x < 0) | (x > 3), axis=1)
    assert np.all(y[out] == 0.0)


def test_indicator_examples():
    g = build_indicator([0.5], 0.2, 0.05, "inner")
    assert g(0.5) == 1.0 and g(0.75) == 0.0
    assert g(0.725) == pytest.approx(0.5, abs=1e-12)  # 0.725 itself is rounded
    h = build_indicator([0.5], 0.2, 0.05, "outer")
    x = np.linspace(-0.5, 1.5, 4001)[:, None]
    assert np.allclose(g(x) + h(x), 1.0, atol=1e-15)


def test_indicator_vanishes_outside(rng):
    c = np.array([0.4, 0.6])
    g = build_indicator(c, 0.1, 0.02, "inner")
    x = rng.random((20_000, 2))
    far = np.any(np.abs(x - c) >= 0.12, axis=1)
    assert np.all(g(x)[far] == 0.0)
    inside = np.all(np.abs(x - c) <= 0.1, axis=1)
    assert np.allclose(g(x)[inside], 1.0, atol=1e-5)
    with pytest.raises(PreconditionError):
        build_indicator(c, 0.1, 0.0)


def test_constants():
    assert W1(1, 2) == 54
    mp.mp.dps = 40
    want = 2 + 2 * mp.e * (2 * mp.e) ** 2 / mp.sqrt(2)
    assert abs(c_dm(1, 2) - float(want)) < 1e-12
    assert c_dm(1, 2) == pytest.approx(115.6, abs=0.05)


def _single_term(k, j, a, d=1, m=2):
    outer = SplineExpansion(m, d, [Layer(k, tuple(j), np.full((1,) * d, a))])
    return PiecewiseSplineApprox(outer, SplineExpansion(m, d), None)


def test_compile_single_term():
    ap = _single_term(3, (2,), 0.7)
    net, rep = compile_approx(ap, 1e-2, n_audit=20_000)
    x = np.linspace(0, 1, 20_001)[:, None]
    assert np.max(np.abs(net(x) - ap.evaluate(x))) <= 1e-2 * 0.7 + 1e-12
    assert rep.measured_error <= 1e-2 * 0.7 + 1e-12
    assert rep.n_terms == 1 and rep.partition["E_B"] == 1
    assert rep.budgets_ok
    assert rep.bounds["W1"] == 54
    out = (x[:, 0] < 2 / 8) | (x[:, 0] > 5 / 8)
    assert np.all(net(x)[out] == 0.0)


def test_compile_refuses_large_eps():
    prof = SmoothnessProfile(1.0, 1.0, 1.0, (0.5,))
    par = BesovParams(2.0, 2.0, 2.0, 1)
    adm = eps_admissible(16, prof, par)
    with pytest.raises(PreconditionError, match="admissible"):
        compile_approx(_single_term(3, (2,), 0.7), min(0.5, 2 * adm), prof=prof, params=par)


def test_compile_refuses_empty():
    with pytest.raises(PreconditionError):
        compile_approx(PiecewiseSplineApprox(SplineExpansion(2, 1), SplineExpansion(2, 1), None), 1e-2)


def test_compile_multi_term_fidelity(rng):
    terms = [Layer(2, (-1,), rng.uniform(-1, 1, 5))]
    ap = PiecewiseSplineApprox(SplineExpansion(2, 1, terms), SplineExpansion(2, 1), None)
    net, rep = compile_approx(ap, 1e-3)
    assert rep.budgets_ok
    x = rng.random((5000, 1))
    active = np.zeros(len(x))
    for k, j, a in ap.outer.terms():
        active += abs(a) * (eval_tensor(2, k, j, x) != 0)
    assert np.all(np.abs(net(x) - ap.evaluate(x)) <= 1e-3 * active + 1e-12)
