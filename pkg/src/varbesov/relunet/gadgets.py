"""ReLU gadgets: sawtooth squaring, exact-zero products, B-splines, ramps.

Squaring uses ``u^2 = u - sum_s g_s(u) / 4^s`` with ``g`` the unit hat and
``g_s`` its s-fold composition; truncating after S stages costs at most
``2^{-2S-2}`` on [0, 1].  A product of two inputs in [0, 1] is written as
``b^2 - a^2 + a - 1/4`` with ``a = (x - y + 1)/2`` and ``b = (x + y)/2`` and
then clamped to ``[0, min(x, y)]`` so that a zero input gives exactly zero.
"""

from __future__ import annotations

import math
from math import comb, factorial

import numpy as np

from .builder import Builder, Sig, const, lin


def stages_for(err: float) -> int:
    """Fewest sawtooth stages with pairwise product error ``2^{-2S-1} <= err``."""
    if err <= 0:
        raise ValueError("error must be positive")
    return max(1, math.ceil((math.log2(1.0 / err) - 1.0) / 2.0))


def _hat_stage(bd: Builder, v: Sig) -> Sig:
    # g(v) = 2 eta(v) - 4 eta(v - 1/2) on [0, 1]
    return lin([(2.0, bd.relu(v)), (-4.0, bd.relu(v - 0.5))], nonneg=True)


def sawtooth_terms(bd: Builder, u: Sig, S: int, start=None):
    """Carry ``acc = u - sum_{s<=S} g_s(u)/4^s`` (nonnegative) through S layers.

    ``start`` optionally adds a constant-free signal to the accumulator.
    Returns the accumulator on layer ``u.layer + S``.
    """
    acc = u if start is None else start
    v = u
    for s in range(1, S + 1):
        g = _hat_stage(bd, v)
        acc_c = bd.carry(acc, g.layer) if not acc.is_const else acc
        acc = lin([(1.0, acc_c), (-(0.25 ** s), g)], nonneg=True)
        v = g
    return acc


def square(bd: Builder, u: Sig, S: int) -> Sig:
    """Approximate ``u^2`` for ``u`` in [0, 1]; exact 0 at ``u = 0``."""
    if u.is_const:
        return const(u.const ** 2)
    return sawtooth_terms(bd, u, S)


def _T(bd: Builder, u: Sig, S: int) -> Sig:
    """``sum_{s<=S} g_s(u) / 4^s`` (nonnegative)."""
    if u.is_const:
        val = u.const
        tot = 0.0
        for s in range(1, S + 1):
            val = 2 * max(val, 0.0) - 4 * max(val - 0.5, 0.0)
            tot += val / 4 ** s
        return const(tot)
    acc = const(0.0)
    v = u
    for s in range(1, S + 1):
        g = _hat_stage(bd, v)
        acc_c = bd.carry(acc, g.layer)
        acc = lin([(1.0, acc_c), (0.25 ** s, g)], nonneg=True)
        v = g
    return acc


def mult2(bd: Builder, x: Sig, y: Sig, S: int, clamp: bool = True) -> Sig:
    """Product of two [0, 1] signals with error at most ``2^{-2S-1}``.

    With ``clamp`` the result lies in ``[0, min(x, y)]`` and is bitwise zero
    whenever either input is zero.
    """
    if x.is_const and y.is_const:
        return const(x.const * y.const)
    x, y = bd.align([x, y])
    if x.is_const or y.is_const:
        c, z = (x.const, y) if x.is_const else (y.const, x)
        return lin([(c, z)], nonneg=c >= 0)
    a = lin([(0.5, x), (-0.5, y)], 0.5, nonneg=True)
    b = lin([(0.5, x), (0.5, y)], nonneg=True)
    if x.terms == y.terms and x.const == y.const:
        P = square(bd, x, S)
    else:
        TA = _T(bd, a, S)
        accB = sawtooth_terms(bd, b, S)
        TA, accB = bd.align([TA, accB])
        P = lin([(1.0, TA), (1.0, accB)], -0.25)
    if not clamp:
        return P
    L = P.layer
    xc, yc = bd.carry(x, L), bd.carry(y, L)
    v = lin([(1.0, bd.relu(P)), (-1.0, bd.relu(P - xc))], nonneg=True)
    yc = bd.carry(yc, v.layer)
    return lin([(1.0, bd.relu(v)), (-1.0, bd.relu(v - yc))], nonneg=True)


def tree_depth(D: int) -> int:
    return max(0, math.ceil(math.log2(D))) if D > 1 else 0


def mult_tree(bd: Builder, xs, S: int, clamp: bool = True) -> Sig:
    """Balanced binary tree of pairwise products."""
    xs = list(xs)
    if not xs:
        return const(1.0)
    while len(xs) > 1:
        xs = bd.align(xs)
        nxt = []
        for i in range(0, len(xs) - 1, 2):
            nxt.append(mult2(bd, xs[i], xs[i + 1], S, clamp))
        if len(xs) % 2:
            nxt.append(xs[-1])
        xs = nxt
    return xs[0]


def tree_error(D: int, S: int) -> float:
    """Worst-case error of ``mult_tree`` on [0, 1]^D."""
    return (D - 1) * 2.0 ** (-2 * S - 1)


def power(bd: Builder, u: Sig, m: int, S: int) -> Sig:
    """``u^m`` by a balanced product tree over m copies (no clamps needed)."""
    if m == 1:
        return u
    return mult_tree(bd, [u] * m, S, clamp=False)


def power_error(m: int, S: int) -> float:
    if m == 1:
        return 0.0
    # squares are within 2^{-2S-2}; generic pairs within 2^{-2S-1}
    return (m - 1) * 2.0 ** (-2 * S - 1)


def bspline_coefs(m: int) -> np.ndarray:
    """Weights of ``u_j^m`` (``u_j = (x-j)_+/(m+1)``) in the truncated-power form."""
    return np.array([(-1) ** j * comb(m + 1, j) * (m + 1) ** m / factorial(m)
                     for j in range(m + 1)])


def univariate_bspline(bd: Builder, x: Sig, m: int, S: int) -> Sig:
    """``N(x)`` approximant, exactly zero outside [0, m+1] and in [0, 1]."""
    m1 = float(m + 1)
    # clamp the argument to [0, m+1]
    px = bd.relu(x)
    xc = lin([(1.0, px), (-1.0, bd.relu(x - m1))], nonneg=True)
    # tent min(x, m+1-x, 1)_+ dominates N
    xs = bd.carry(x, px.layer)
    tprime = bd.relu(lin([(1.0, xs), (-1.0, bd.relu(2.0 * x - m1))]))
    tent = lin([(1.0, bd.carry(tprime, tprime.layer + 1)), (-1.0, bd.relu(tprime - 1.0))], nonneg=True)
    us = [lin([(1.0 / m1, xc)], nonneg=True)]
    for j in range(1, m + 1):
        us.append(lin([(1.0 / m1, bd.relu(xc - float(j)))], nonneg=True))
    us = bd.align(us)
    w = bspline_coefs(m)
    pw = [power(bd, u, m, S) for u in us]
    pw = bd.align(pw)
    raw = lin(list(zip(w, pw)))
    raw, tent = bd.align([raw, tent])
    inner = bd.relu(tent - raw)
    tent = bd.carry(tent, inner.layer)
    return bd.relu(tent - inner)


def univariate_error(m: int, S: int) -> float:
    return float(np.abs(bspline_coefs(m)).sum()) * power_error(m, S) if m > 1 else 0.0


def indicator_ramp(bd: Builder, x: Sig, c: float, t: float, xi: float) -> Sig:
    """Per-axis ramp: 1 on [c-t, c+t], 0 outside [c-t-xi, c+t+xi].

    Written as ``1 - eta(1 - eta(z1 + 1)) - eta(1 - eta(1 - z2))``; the two
    ramps never leave 1 together (t > 0), so this equals their minimum and
    both plateaus are exact in floating point.
    """
    z1 = lin([(1.0 / xi, x)], (t - c) / xi)
    z2 = lin([(1.0 / xi, x)], (-t - c) / xi)
    ra = bd.relu(lin([(-1.0, bd.relu(z1 + 1.0))], 1.0))
    rb = bd.relu(lin([(-1.0, bd.relu(1.0 - z2))], 1.0))
    return lin([(-1.0, ra), (-1.0, rb)], 1.0, nonneg=True)


def outer_ramp(bd: Builder, gs) -> Sig:
    """``min(1, max_i (1 - g_i))``: 0 on the box, 1 beyond the ramp band."""
    rho = [lin([(-1.0, g)], 1.0, nonneg=True) for g in gs]
    if len(rho) == 1:
        return rho[0]
    cur = rho[0]
    for r in rho[1:]:
        cur, r = bd.align([cur, r])
        cur = lin([(1.0, bd.carry(cur, cur.layer + 1)), (1.0, bd.relu(r - cur))], nonneg=True)
    return lin([(1.0, bd.carry(cur, cur.layer + 1)), (-1.0, bd.relu(cur - 1.0))], nonneg=True)
