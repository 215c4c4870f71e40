"""Level-k spline projection, detail layers, and coefficient norms.

``Q_k`` is realized as a weighted least-squares fit on Gauss-Legendre nodes
placed in every dyadic cell; because the tensor basis and the tensor node
set factor per axis, the solve reduces to one small banded system per axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.linalg as sla

from . import kernels
from .bspline import Box, active_ranges, design_matrix
from .errors import BudgetError
from .quadrature import axis_rule, tensor_points

RHO = 4
RIDGE = 1e-12
MAX_COEFS = 4_000_000
MAX_SAMPLES = 30_000_000


@dataclass
class Layer:
    """Coefficients of one dyadic level stored as a dense box of shifts."""

    k: int
    offset: tuple
    coef: np.ndarray
    region: Box | None = None

    @property
    def d(self) -> int:
        return self.coef.ndim

    def indices(self) -> np.ndarray:
        """Shifts of the nonzero entries, lexicographic."""
        nz = np.argwhere(self.coef != 0)
        return nz + np.asarray(self.offset, dtype=np.int64)

    def values(self) -> np.ndarray:
        return self.coef[self.coef != 0]

    @property
    def n_terms(self) -> int:
        return int(np.count_nonzero(self.coef))

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        ys = (2.0 ** self.k) * x
        return kernels.tensor_eval(self.m_hint, ys, np.asarray(self.offset, dtype=np.int64),
                                   np.ascontiguousarray(self.coef))

    m_hint: int = field(default=1, repr=False)

    def copy(self) -> "Layer":
        return Layer(self.k, tuple(self.offset), self.coef.copy(), self.region, self.m_hint)


class SplineExpansion:
    """Finite sum of dyadic tensor B-splines, grouped in level layers."""

    def __init__(self, m: int, d: int, layers=None):
        self.m = int(m)
        self.d = int(d)
        self.layers: list[Layer] = []
        for lay in layers or []:
            self.add_layer(lay)

    def add_layer(self, lay: Layer) -> None:
        if lay.coef.ndim != self.d:
            raise ValueError("layer dimension mismatch")
        lay.m_hint = self.m
        self.layers.append(lay)

    @classmethod
    def zero(cls, m: int, d: int) -> "SplineExpansion":
        return cls(m, d)

    @property
    def levels(self) -> list:
        return sorted({lay.k for lay in self.layers})

    @property
    def n_terms(self) -> int:
        return sum(lay.n_terms for lay in self.layers)

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x)

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1 and x.shape[0] == self.d and self.d > 1
        pts = x.reshape(-1, self.d) if x.ndim <= 1 else x
        if pts.shape[1] != self.d:
            raise ValueError("dimension mismatch")
        out = np.zeros(pts.shape[0])
        for lay in self.layers:
            if lay.n_terms:
                out += lay.evaluate(pts)
        return out[0] if single else out

    def scaled(self, c: float) -> "SplineExpansion":
        out = SplineExpansion(self.m, self.d)
        for lay in self.layers:
            nl = lay.copy()
            nl.coef = nl.coef * c
            out.add_layer(nl)
        return out

    def terms(self):
        """Yield ``(k, j, a)`` for every nonzero coefficient."""
        for lay in self.layers:
            for j, a in zip(lay.indices(), lay.values()):
                yield lay.k, tuple(int(v) for v in j), float(a)

    def level_table(self) -> dict:
        """Merge layers per level; returns k -> (offset, coef)."""
        out = {}
        for lay in self.layers:
            if lay.k in out:
                off, cf = out[lay.k]
                off, cf = _add_boxes(off, cf, lay.offset, lay.coef)
                out[lay.k] = (off, cf)
            else:
                out[lay.k] = (tuple(lay.offset), lay.coef.copy())
        return out

    def to_json(self) -> dict:
        layers = []
        for lay in self.layers:
            terms = [{"j": [int(v) for v in j], "a": float(a)}
                     for j, a in zip(lay.indices(), lay.values())]
            obj = {"k": int(lay.k), "terms": terms}
            if lay.region is not None:
                obj["region"] = lay.region.to_json()
            layers.append(obj)
        return {"m": self.m, "d": self.d, "layers": layers}

    @classmethod
    def from_json(cls, obj) -> "SplineExpansion":
        layers = obj["layers"]
        d = obj.get("d")
        if d is None:
            d = next((len(t["j"]) for lay in layers for t in lay["terms"]), 1)
        out = cls(int(obj["m"]), int(d))
        for lay in layers:
            region = Box.from_json(lay["region"]) if "region" in lay else None
            js = np.array([t["j"] for t in lay["terms"]], dtype=np.int64).reshape(-1, d)
            a = np.array([t["a"] for t in lay["terms"]], dtype=float)
            out.add_layer(layer_from_terms(int(lay["k"]), js, a, region))
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def layer_from_terms(k: int, js: np.ndarray, a: np.ndarray, region: Box | None = None) -> Layer:
    js = np.asarray(js, dtype=np.int64)
    d = js.shape[1]
    if js.shape[0] == 0:
        return Layer(k, (0,) * d, np.zeros((0,) * d), region)
    lo = js.min(axis=0)
    hi = js.max(axis=0)
    coef = np.zeros(tuple(hi - lo + 1))
    np.add.at(coef, tuple((js - lo).T), a)
    return Layer(k, tuple(int(v) for v in lo), coef, region)


def _add_boxes(off1, c1, off2, c2):
    if c1.size == 0:
        return tuple(off2), c2.copy()
    if c2.size == 0:
        return tuple(off1), c1.copy()
    lo = np.minimum(off1, off2)
    hi = np.maximum(np.add(off1, c1.shape), np.add(off2, c2.shape))
    out = np.zeros(tuple(hi - lo))
    s1 = tuple(slice(o - l, o - l + n) for o, l, n in zip(off1, lo, c1.shape))
    s2 = tuple(slice(o - l, o - l + n) for o, l, n in zip(off2, lo, c2.shape))
    out[s1] += c1
    out[s2] += c2
    return tuple(int(v) for v in lo), out


def _nodes_per_cell(m: int, k: int, rho: int) -> int:
    return max(m + 1, int(np.ceil(rho * (2 ** k + m) / 2 ** k)))


def _axis_projector(m: int, k: int, lo: float, hi: float, jmin: int, jmax: int, rho: int):
    """Map samples on the axis rule to least-squares coefficients."""
    g = _nodes_per_cell(m, k, rho)
    nodes, w = axis_rule(lo, hi, k, g)
    nb = jmax - jmin + 1
    B = design_matrix(m, k, nodes[:, None], (jmin,), (nb,)).toarray()
    BW = B.T * w
    G = BW @ B
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > 1e12:
        G = G + RIDGE * np.trace(G) / nb * np.eye(nb)
    P = sla.solve(G, BW, assume_a="pos")
    return nodes, P, cond


def project(f, m: int, k: int, d: int = 1, region: Box | None = None, rho: int = RHO,
            return_info: bool = False):
    """Least-squares level-``k`` spline fit of ``f`` on ``region`` (default Omega).

    Only bases not vanishing on the region are kept.  ``f`` maps (n, d) arrays
    to n values.
    """
    if region is None:
        region = Box.unit(d)
    d = region.d
    if k < 0:
        raise ValueError("level must be nonnegative")
    rng = active_ranges(m, k, region, d)
    if rng is None:
        out = SplineExpansion(m, d, [Layer(k, (0,) * d, np.zeros((0,) * d), region)])
        return (out, {"cond": [1.0] * d}) if return_info else out
    ncoef = int(np.prod([b - a + 1 for a, b in rng], dtype=np.float64))
    if ncoef > MAX_COEFS:
        raise BudgetError(f"level {k} needs {ncoef} coefficients (limit {MAX_COEFS})")
    lo = [max(v, 0.0) for v in region.lo]
    hi = [min(v, 1.0) for v in region.hi]
    axes = []
    conds = []
    for a in range(d):
        nodes, P, cond = _axis_projector(m, k, lo[a], hi[a], rng[a][0], rng[a][1], rho)
        axes.append((nodes, P))
        conds.append(float(cond))
    nsamp = int(np.prod([len(n) for n, _ in axes], dtype=np.float64))
    if nsamp > MAX_SAMPLES:
        raise BudgetError(f"level {k} projection needs {nsamp} samples (limit {MAX_SAMPLES})")
    pts = tensor_points([n for n, _ in axes])
    F = np.asarray(f(pts), dtype=float).reshape([len(n) for n, _ in axes])
    C = F
    for a, (_, P) in enumerate(axes):
        C = np.moveaxis(np.tensordot(P, C, axes=([1], [a])), 0, a)
    tag = None if _is_unit(region) else region
    lay = Layer(k, tuple(r[0] for r in rng), C, tag)
    out = SplineExpansion(m, d, [lay])
    return (out, {"cond": conds}) if return_info else out


def _is_unit(box: Box) -> bool:
    return all(v <= 0.0 for v in box.lo) and all(v >= 1.0 for v in box.hi)


def refinement_matrix(m: int, jmin: int, n: int, fmin: int, fn: int) -> np.ndarray:
    """Two-scale matrix taking level-(k-1) shifts to level-k shifts (one axis)."""
    mask = np.array([comb(m + 1, i) for i in range(m + 2)], dtype=float) / 2.0 ** m
    R = np.zeros((fn, n))
    for c in range(n):
        j = jmin + c
        for i, w in enumerate(mask):
            r = 2 * j + i - fmin
            if 0 <= r < fn:
                R[r, c] = w
    return R


def refine(lay: Layer, m: int, target_range=None) -> Layer:
    """Re-express a level-(k-1) layer at level ``k`` (cropped to ``target_range``)."""
    d = lay.d
    k = lay.k + 1
    if target_range is None:
        target_range = [(-m, 2 ** k - 1)] * d
    C = lay.coef
    for a in range(d):
        fmin, fmax = target_range[a]
        R = refinement_matrix(m, lay.offset[a], C.shape[a], fmin, fmax - fmin + 1)
        C = np.moveaxis(np.tensordot(R, C, axes=([1], [a])), 0, a)
    return Layer(k, tuple(r[0] for r in target_range), C, lay.region)


def _single_layer(e: SplineExpansion) -> Layer | None:
    if not e.layers:
        return None
    table = e.level_table()
    if len(table) != 1:
        raise ValueError("expected a single-level expansion")
    k, (off, cf) = next(iter(table.items()))
    return Layer(k, off, cf, e.layers[0].region)


def detail_layer(Qk: SplineExpansion, Qk_minus_1: SplineExpansion | None) -> SplineExpansion:
    """``q_k = Q_k - Q_{k-1}`` as one level-k layer."""
    hi = _single_layer(Qk)
    if hi is None:
        raise ValueError("Q_k is empty")
    lo = _single_layer(Qk_minus_1) if Qk_minus_1 is not None else None
    if lo is None or lo.coef.size == 0:
        return SplineExpansion(Qk.m, Qk.d, [hi])
    if hi.k != lo.k + 1:
        raise ValueError(f"level mismatch: {hi.k} vs {lo.k}")
    m = Qk.m
    k = hi.k
    # keep every level-k shift that can be nonzero on the unit cube
    full = [(-m, 2 ** k - 1)] * Qk.d
    ref = refine(lo, m, full)
    off, cf = _add_boxes(hi.offset, hi.coef, ref.offset, -ref.coef)
    # crop to the level-k index set
    sl = tuple(slice(max(0, -m - o), min(n, 2 ** k - 1 - o + 1))
               for o, n in zip(off, cf.shape))
    off = tuple(max(o, -m) for o in off)
    return SplineExpansion(m, Qk.d, [Layer(k, off, cf[sl], hi.region)])


def reconstruct(e: SplineExpansion, x) -> np.ndarray:
    return e.evaluate(x)


def coeff_besov_norm(e: SplineExpansion, s: float, p: float, q: float) -> float:
    """Sequence-space Besov functional of the coefficient table."""
    if not (p > 0 and q > 0):
        raise ValueError("p and q must be positive")
    d = e.d
    vals = []
    for k, (_, cf) in sorted(e.level_table().items()):
        a = np.abs(cf[cf != 0])
        if a.size == 0:
            vals.append(0.0)
        elif np.isinf(p):
            vals.append(2.0 ** (k * s) * float(a.max()))
        else:
            vals.append(float(np.sum(a ** p) * 2.0 ** ((s * p - d) * k)) ** (1.0 / p))
    if not vals:
        return 0.0
    v = np.asarray(vals)
    if np.isinf(q):
        return float(v.max())
    return float(np.sum(v ** q) ** (1.0 / q))
