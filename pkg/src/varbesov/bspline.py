"""Cardinal B-splines, their dyadic tensor products, and index sets.

Convention: ``M_{k,j}(x) = prod_i N(2^k x_i - j_i)`` where ``N`` is the
degree-``m`` cardinal B-spline supported on ``[0, m+1]``.  On the unit cube
the level-``k`` index set is ``{-m, ..., 2^k - 1}^d``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, factorial

import numpy as np
import scipy.sparse as sp

from . import kernels


@dataclass(frozen=True)
class Box:
    """Axis-aligned closed box ``[lo, hi]``.  Empty if any ``lo_i > hi_i``."""

    lo: tuple
    hi: tuple

    @classmethod
    def unit(cls, d: int) -> "Box":
        return cls((0.0,) * d, (1.0,) * d)

    @classmethod
    def cube(cls, center, half, clip=True) -> "Box":
        c = np.atleast_1d(np.asarray(center, dtype=float))
        lo, hi = c - half, c + half
        if clip:
            lo, hi = np.maximum(lo, 0.0), np.minimum(hi, 1.0)
        return cls(tuple(float(v) for v in lo), tuple(float(v) for v in hi))

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def empty(self) -> bool:
        return any(a > b for a, b in zip(self.lo, self.hi))

    @property
    def volume(self) -> float:
        if self.empty:
            return 0.0
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.empty:
            return np.zeros(x.shape[0], dtype=bool)
        return np.all((x >= np.asarray(self.lo)) & (x <= np.asarray(self.hi)), axis=1)

    def to_json(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}

    @classmethod
    def from_json(cls, obj) -> "Box":
        return cls(tuple(float(v) for v in obj["lo"]), tuple(float(v) for v in obj["hi"]))


def _truncated_power(m: int, x: np.ndarray) -> np.ndarray:
    # symmetric about (m+1)/2; folding keeps the alternating sum short
    x = np.minimum(x, m + 1 - x) if m > 0 else x
    out = np.zeros_like(x)
    for j in range(m + 2):
        out += (-1) ** j * comb(m + 1, j) * np.maximum(x - j, 0.0) ** m
    out /= factorial(m)
    # the alternating sum cancels badly past the support; the spline is exactly 0 there
    out[(x <= 0) | (x >= m + 1)] = 0.0
    if m == 0:
        out[(x >= 0) & (x < 1)] = 1.0
    return np.maximum(out, 0.0)


def _recursive(m: int, x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    inside = (x >= 0) & (x < m + 1)
    if not np.any(inside):
        return out
    xi = x[inside]
    first, vals = kernels.local_basis(m, xi)
    # shift 0 sits at position -first in the local window
    pos = -first
    out[inside] = vals[np.arange(xi.size), pos]
    return out


def eval_univariate(m: int, x, method: str = "auto"):
    """Degree-``m`` cardinal B-spline ``N(x)``; accepts scalars or arrays."""
    if m < 0:
        raise ValueError("degree must be nonnegative")
    arr = np.asarray(x, dtype=float)
    flat = np.atleast_1d(arr).ravel().copy()
    if method == "auto":
        method = "power" if m <= 4 else "recursion"
    if method == "power":
        out = _truncated_power(m, flat)
    elif method == "recursion":
        out = _recursive(m, flat)
    else:
        raise ValueError(f"unknown method {method!r}")
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def eval_tensor(m: int, k: int, j, x):
    """``M_{k,j}(x)`` at one point (d-vector) or many (n x d)."""
    j = np.atleast_1d(np.asarray(j, dtype=float))
    xa = np.asarray(x, dtype=float)
    single = xa.ndim <= 1
    pts = np.atleast_2d(xa) if xa.ndim == 1 else xa
    if xa.ndim == 0:
        pts = xa.reshape(1, 1)
    if pts.shape[1] != j.size:
        raise ValueError(f"dimension mismatch: x has {pts.shape[1]} coords, j has {j.size}")
    y = (2.0 ** k) * pts - j
    val = np.prod(eval_univariate(m, y), axis=1)
    return float(val[0]) if single else val


def index_range(m: int, k: int, d: int):
    """Per-axis inclusive shift range of the full level-``k`` index set."""
    return [(-m, 2 ** k - 1)] * d


def active_ranges(m: int, k: int, region: Box | None, d: int | None = None):
    """Inclusive per-axis shift ranges whose bases do not vanish on ``region``.

    A basis is active when the open interior of its support meets the box; a
    degenerate axis ``lo == hi`` keeps shifts with ``lo`` strictly inside the
    support.  Returns ``None`` for an empty selection.
    """
    if region is None:
        if d is None:
            raise ValueError("need d when region is None")
        region = Box.unit(d)
    if region.empty:
        return None
    h = 2.0 ** k
    out = []
    for lo, hi in zip(region.lo, region.hi):
        lo = max(lo, 0.0)
        hi = min(hi, 1.0)
        if lo > hi:
            return None
        # (j + m + 1)/h > lo  and  j/h < hi ; degenerate: j/h < lo < (j+m+1)/h
        jmin = int(np.floor(h * lo)) - m
        if lo < hi:
            jmax = int(np.ceil(h * hi)) - 1
        else:
            jmax = int(np.ceil(h * lo)) - 1
        jmin = max(jmin, -m)
        jmax = min(jmax, 2 ** k - 1)
        if jmin > jmax:
            return None
        out.append((jmin, jmax))
    return out


def active_indices(m: int, k: int, region: Box | None = None, d: int | None = None) -> np.ndarray:
    """Active shifts as an (count, d) integer array in lexicographic order."""
    if d is None:
        d = region.d if region is not None else 1
    rng = active_ranges(m, k, region, d)
    if rng is None:
        return np.zeros((0, d), dtype=np.int64)
    axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in rng]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=1)


def design_matrix(m: int, k: int, x, offsets, shape) -> sp.csr_matrix:
    """Sparse matrix of ``M_{k,j}(x_i)`` for shifts in a dense box.

    Column order is row-major over ``shape`` starting at ``offsets``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    ys = (2.0 ** k) * x
    rows, cols, data = kernels.tensor_rows(m, ys, np.asarray(offsets, dtype=np.int64),
                                           tuple(int(s) for s in shape))
    n = x.shape[0]
    ncols = int(np.prod(shape))
    return sp.csr_matrix((data, (rows, cols)), shape=(n, ncols))
