"""Composite Gauss-Legendre quadrature on dyadic cells clipped to boxes."""

from __future__ import annotations

import numpy as np

from .bspline import Box
from .errors import BudgetError

MAX_POINTS = 40_000_000


def axis_rule(lo: float, hi: float, level: int, g: int):
    """Nodes and weights on ``[lo, hi]`` split along the dyadic level grid."""
    if hi <= lo:
        return np.zeros(0), np.zeros(0)
    h = 2.0 ** -level
    i0 = int(np.floor(lo / h))
    i1 = int(np.ceil(hi / h))
    edges = np.arange(i0, i1 + 1) * h
    edges[0] = max(edges[0], lo)
    edges[-1] = min(edges[-1], hi)
    edges = np.unique(np.clip(edges, lo, hi))
    a, b = edges[:-1], edges[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    xg, wg = np.polynomial.legendre.leggauss(g)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


def box_rule(box: Box, level: int, g: int):
    """Per-axis rules for a box (tensor structure is left implicit)."""
    return [axis_rule(lo, hi, level, g) for lo, hi in zip(box.lo, box.hi)]


def tensor_points(axes) -> np.ndarray:
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([gr.ravel() for gr in grids], axis=1)


def complement_boxes(outer: Box, inner: Box) -> list:
    """Disjoint boxes covering ``outer`` minus ``inner`` (up to measure zero)."""
    if inner.empty:
        return [outer]
    lo_i = np.maximum(inner.lo, outer.lo)
    hi_i = np.minimum(inner.hi, outer.hi)
    if np.any(lo_i > hi_i):
        return [outer]
    pieces = []
    cur_lo = list(outer.lo)
    cur_hi = list(outer.hi)
    for a in range(outer.d):
        if cur_lo[a] < lo_i[a]:
            hi = list(cur_hi)
            hi[a] = float(lo_i[a])
            pieces.append(Box(tuple(cur_lo), tuple(hi)))
        if hi_i[a] < cur_hi[a]:
            lo = list(cur_lo)
            lo[a] = float(hi_i[a])
            pieces.append(Box(tuple(lo), tuple(cur_hi)))
        cur_lo[a] = float(lo_i[a])
        cur_hi[a] = float(hi_i[a])
    return [p for p in pieces if p.volume > 0]


def integrate(fun, box: Box, level: int, g: int = 4, r: float = 2.0, chunk: int = 1 << 20):
    """``int_box |fun|^r`` for finite ``r``; ``max_box |fun|`` for ``r = inf``.

    ``fun`` maps an (n, d) array to n values.  Evaluation is chunked.
    """
    if box.empty or box.volume == 0.0:
        return 0.0
    axes = box_rule(box, level, g)
    sizes = [len(nw[0]) for nw in axes]
    total = int(np.prod(sizes, dtype=np.float64))
    if total > MAX_POINTS:
        raise BudgetError(f"quadrature needs {total} points (limit {MAX_POINTS})")
    nodes = [a[0] for a in axes]
    weights = [a[1] for a in axes]
    d = box.d
    # chunk over the first axis
    inner = total // sizes[0] if sizes[0] else 0
    step = max(1, chunk // max(inner, 1))
    acc = 0.0
    for s in range(0, sizes[0], step):
        sub_nodes = [nodes[0][s:s + step]] + nodes[1:]
        pts = tensor_points(sub_nodes)
        vals = np.abs(np.asarray(fun(pts), dtype=float))
        if np.isinf(r):
            acc = max(acc, float(vals.max()) if vals.size else 0.0)
            continue
        w = weights[0][s:s + step]
        for a in range(1, d):
            w = np.multiply.outer(w, weights[a])
        acc += float(np.dot(w.ravel(), vals ** r))
    return acc


def lr_norm(fun, boxes, level: int, g: int = 4, r: float = 2.0) -> float:
    """L_r norm of ``fun`` over a union of disjoint boxes."""
    if np.isinf(r):
        return max((integrate(fun, b, level, g, r) for b in boxes), default=0.0)
    tot = sum(integrate(fun, b, level, g, r) for b in boxes)
    return float(tot ** (1.0 / r))
