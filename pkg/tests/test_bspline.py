from fractions import Fraction
from math import comb, factorial

import numpy as np
import pytest
from hypothesis import given, strategies as st

from varbesov.bspline import Box, active_indices, eval_tensor, eval_univariate, design_matrix


def exact_N(m, x):
    """Rational evaluation of the truncated power sum."""
    x = Fraction(x)
    tot = sum((-1) ** j * comb(m + 1, j) * max(x - j, 0) ** m for j in range(m + 2))
    return tot / factorial(m)


def test_univariate_examples():
    assert eval_univariate(1, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert eval_univariate(3, -0.5) == 0.0
    assert eval_univariate(2, 1.5) == pytest.approx(0.75, abs=1e-15)


@pytest.mark.parametrize("m", range(1, 8))
def test_univariate_matches_rational_oracle(m):
    xs = [Fraction(i, 37) for i in range(-10, 37 * (m + 1) + 10)]
    got = eval_univariate(m, np.array([float(x) for x in xs]))
    want = np.array([float(exact_N(m, x)) for x in xs])
    assert np.max(np.abs(got - want)) < 1e-13


@pytest.mark.parametrize("m", range(1, 8))
def test_power_and_recursion_agree(m):
    x = np.linspace(-1, m + 2, 5001)
    a = eval_univariate(m, x, method="power")
    b = eval_univariate(m, x, method="recursion")
    assert np.max(np.abs(a - b)) < 1e-13


def test_tensor_examples():
    assert eval_tensor(1, 0, (0, 0), np.array([1.0, 1.0])) == pytest.approx(1.0)
    assert eval_tensor(2, 5, (0, 0), np.array([0.9, 0.9])) == 0.0
    assert eval_tensor(1, 1, (0, 0), np.array([0.5, 0.5])) == pytest.approx(1.0)


def test_tensor_dimension_mismatch():
    with pytest.raises(ValueError):
        eval_tensor(2, 1, (0, 0), np.array([0.1, 0.2, 0.3]))


def test_active_indices_examples():
    full = active_indices(2, 3, Box.unit(1))
    assert full[:, 0].tolist() == list(range(-2, 8))
    empty = active_indices(1, 2, Box((0.6,), (0.4,)))
    assert empty.shape[0] == 0


def test_active_indices_small_box():
    # open-support rule; the documented example also lists 6, whose support
    # only touches A at one endpoint
    got = active_indices(1, 4, Box((0.5,), (0.5 + 2 ** -4,)))
    assert got[:, 0].tolist() == [7, 8]


@pytest.mark.parametrize("d,m,k", [(1, 2, 3), (2, 1, 2), (3, 2, 1)])
def test_index_count_and_order(d, m, k):
    idx = active_indices(m, k, None, d)
    assert idx.shape == ((2 ** k + m) ** d, d)
    assert [tuple(r) for r in idx] == sorted(tuple(r) for r in idx)


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("m", [1, 2, 3])
def test_partition_of_unity(d, m, rng):
    x = rng.random((10_000, d))
    for k in range(0, 7 if d < 3 else 5):
        lo, hi = -m, 2 ** k - 1
        n = hi - lo + 1
        B = design_matrix(m, k, x, (lo,) * d, (n,) * d)
        assert np.max(np.abs(np.asarray(B.sum(axis=1)).ravel() - 1.0)) < 1e-12


@given(m=st.integers(1, 5), k=st.integers(0, 6), j=st.integers(-5, 70),
       x=st.floats(-0.5, 1.5, allow_nan=False))
def test_nonnegative_and_supported(m, k, j, x):
    v = eval_tensor(m, k, (j,), np.array([x]))
    assert v >= 0.0
    y = 2.0 ** k * x - j
    if y <= 0 or y >= m + 1:
        assert v == 0.0


@given(m=st.integers(1, 4), k=st.integers(0, 6),
       j=st.tuples(st.integers(-4, 60), st.integers(-4, 60)),
       x=st.tuples(st.floats(0, 1), st.floats(0, 1)))
def test_tensor_is_product_of_univariates(m, k, j, x):
    v = eval_tensor(m, k, j, np.array(x))
    w = np.prod([eval_univariate(m, 2.0 ** k * xi - ji) for xi, ji in zip(x, j)])
    assert abs(v - w) <= 1e-14
