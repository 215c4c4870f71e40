"""Adaptive spline approximation refined around the point of least smoothness.

Dyadic quantities (threshold ``a_k``, box half-width ``t``, extra levels
``N_k``, cutoffs and greedy counts) use base-2 logarithms; the rate-style
``epsilon_equivalent`` uses natural logarithms.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .bspline import Box
from .errors import AuditError, PreconditionError
from .quadrature import complement_boxes, lr_norm
from .quasi_interp import Layer, SplineExpansion, detail_layer, layer_from_terms, project
from .smoothness import BesovParams, SmoothnessProfile

MODES = ("adaptive_i", "adaptive_ii", "uniform")
SAMPLE_CAP = 4_000_000


class DegenerateBudgetWarning(UserWarning):
    pass


def default_level_cap(m: int, d: int, rho: int = 4) -> int:
    """Largest level whose global projection stays within ``SAMPLE_CAP`` samples."""
    k = 0
    while True:
        g = max(m + 1, math.ceil(rho * (2 ** (k + 1) + m) / 2 ** (k + 1)))
        if (g * 2 ** (k + 1)) ** d > SAMPLE_CAP:
            return k
        k += 1


@dataclass
class AdaptiveBudget:
    N: int
    d: int
    m: int
    k_bar: int
    a_k: float | None
    t: float
    N_k: int
    center: tuple
    regime: str
    degenerate: bool = False
    eps_sched: float | None = None
    lam: float | None = None
    k_star: int | None = None
    kNk_star: int | None = None
    level_cap: int | None = None
    notes: list = field(default_factory=list)

    @property
    def region(self) -> Box:
        if self.degenerate or self.t <= 0:
            return Box((1.0,) * self.d, (0.0,) * self.d)
        return Box.cube(self.center, self.t)

    @property
    def inner_level(self) -> int:
        return self.k_bar + self.N_k

    def n_k(self, k: int) -> int:
        return math.ceil(self.lam * 2 ** (self.k_bar * self.d) * 2 ** (-self.eps_sched * (k - self.k_bar)))

    def m_k(self, k: int) -> int:
        return math.ceil(self.lam * 2 ** (self.k_bar * self.d)
                         * 2 ** (-self.eps_sched * (k - self.k_bar - self.N_k)))

    def outer_tail_levels(self) -> range:
        if self.k_star is None:
            return range(0)
        top = self.k_star if self.level_cap is None else min(self.k_star, self.level_cap)
        return range(self.k_bar + 1, top + 1)

    def inner_tail_levels(self) -> range:
        if self.kNk_star is None:
            return range(0)
        top = self.kNk_star if self.level_cap is None else min(self.kNk_star, self.level_cap + self.N_k)
        return range(self.inner_level + 1, top + 1)

    def tail_sum(self) -> float:
        """Greedy terms scheduled, in units of ``2^{k_bar d}``."""
        if self.k_star is None:
            return 0.0
        base = 2 ** (self.k_bar * self.d)
        tot = sum(self.n_k(k) for k in self.outer_tail_levels())
        tot += sum(self.m_k(k) for k in self.inner_tail_levels())
        return tot / base

    def audit_constant(self) -> float:
        return (self.m + 1) ** self.d * (3.0 + self.tail_sum())

    def to_json(self) -> dict:
        out = asdict(self)
        out["center"] = list(self.center)
        out["region"] = self.region.to_json()
        return out


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def plan_budget(N: int, prof: SmoothnessProfile, params: BesovParams, m: int = 2,
                lam: float = 1.0, eps_sched: float | None = None,
                level_cap: int | None = None) -> AdaptiveBudget:
    """Schedule of levels, refinement box and greedy counts for a term budget ``N``."""
    d = prof.d
    if params.d != d:
        raise PreconditionError("profile and Besov parameters disagree on d")
    if N < 2 ** d:
        raise PreconditionError(f"N must be at least 2^d = {2 ** d}")
    delta = params.delta
    if not prof.s > delta:
        raise PreconditionError(f"need s > delta (s={prof.s}, delta={delta})")
    smax = prof.s_max
    if not smax < min(m, m - 1 + 1.0 / params.p):
        warnings.warn(f"s_max={smax:.3f} is not below min(m, m-1+1/p) for m={m}",
                      stacklevel=2)
    k_bar = _round_half_up(math.log2(N) / d)
    regime = "i" if params.p >= params.r else "ii"
    b = AdaptiveBudget(N=N, d=d, m=m, k_bar=k_bar, a_k=None, t=0.0, N_k=0,
                       center=tuple(float(v) for v in prof.c), regime=regime)
    if level_cap is None:
        level_cap = default_level_cap(m, d)
    b.level_cap = level_cap

    degenerate = None
    if prof.beta == 0:
        degenerate = "beta = 0: constant smoothness, no refinement"
    elif k_bar < 2:
        degenerate = "k_bar < 2: threshold undefined"
    else:
        b.a_k = (k_bar / math.log2(k_bar)) ** ((prof.s - delta) / prof.alpha)
        la = math.log2(b.a_k)
        if la <= 0:
            degenerate = "a_k <= 1: refinement box undefined"
        else:
            b.t = (la / (prof.beta * k_bar)) ** (1.0 / prof.alpha)
            if b.t >= math.sqrt(d):
                degenerate = f"t = {b.t:.3g} covers the whole cube"
            else:
                b.N_k = max(0, math.ceil(math.log2(k_bar / la) / prof.alpha))
    if degenerate is not None:
        warnings.warn(degenerate, DegenerateBudgetWarning, stacklevel=2)
        b.degenerate = True
        b.t = 0.0
        b.N_k = 0
        b.notes.append(degenerate)
        return b

    if regime == "ii":
        if eps_sched is None:
            eps_sched = 1.0 if delta == 0 else min(max(d * (prof.s - delta) / (2 * delta), 0.05), 10.0)
        if delta > 0 and not eps_sched < d * (prof.s - delta) / delta:
            raise PreconditionError("eps_sched must be below d(s-delta)/delta")
        b.eps_sched = float(eps_sched)
        b.lam = float(lam)
        head = math.ceil(math.log2(lam * 2 ** (k_bar * d)) / eps_sched)
        b.k_star = head + k_bar
        b.kNk_star = head + k_bar + b.N_k
        if b.k_star > level_cap:
            b.notes.append(f"greedy levels truncated at {level_cap} (scheduled up to {b.k_star})")
    return b


@dataclass
class PiecewiseSplineApprox:
    """``outer`` off the box ``region`` and ``inner`` on it."""

    outer: SplineExpansion
    inner: SplineExpansion
    region: Box | None
    mode: str = "uniform"
    meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.outer.d

    @property
    def m(self) -> int:
        return self.outer.m

    @property
    def n_terms(self) -> int:
        return self.outer.n_terms + self.inner.n_terms

    def _has_region(self) -> bool:
        return self.region is not None and not self.region.empty and self.region.volume > 0

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x)

    def evaluate(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = self.outer.evaluate(x)
        if self._has_region():
            inside = self.region.contains(x)
            if np.any(inside):
                out[inside] = self.inner.evaluate(x[inside])
        return out

    def to_json(self) -> dict:
        reg = self.region.to_json() if self.region is not None else None
        return {"region": reg, "outer": self.outer.to_json(), "inner": self.inner.to_json(),
                "mode": self.mode, "meta": self.meta}

    @classmethod
    def from_json(cls, obj) -> "PiecewiseSplineApprox":
        reg = Box.from_json(obj["region"]) if obj.get("region") else None
        return cls(SplineExpansion.from_json(obj["outer"]), SplineExpansion.from_json(obj["inner"]),
                   reg, obj.get("mode", "uniform"), obj.get("meta", {}))


def _support_inside(lay: Layer, m: int, region: Box) -> np.ndarray:
    """Boolean box: support of each stored shift (clipped to the cube) lies in ``region``."""
    h = 2.0 ** lay.k
    mask = np.ones(lay.coef.shape, dtype=bool)
    for a in range(lay.d):
        j = lay.offset[a] + np.arange(lay.coef.shape[a])
        s_lo = np.maximum(j / h, 0.0)
        s_hi = np.minimum((j + m + 1) / h, 1.0)
        ok = (s_lo >= region.lo[a]) & (s_hi <= region.hi[a])
        shape = [1] * lay.d
        shape[a] = -1
        mask = mask & ok.reshape(shape)
    return mask


def _active_mask(lay: Layer, m: int, region: Box | None, complement: bool) -> np.ndarray:
    """Shifts whose basis does not vanish on ``region`` (or on its complement)."""
    if region is None:
        return np.ones(lay.coef.shape, dtype=bool) if not complement else np.zeros(lay.coef.shape, bool)
    if complement:
        if region.empty or region.volume == 0:
            return np.ones(lay.coef.shape, dtype=bool)
        return ~_support_inside(lay, m, region)
    if region.empty:
        return np.zeros(lay.coef.shape, dtype=bool)
    h = 2.0 ** lay.k
    mask = np.ones(lay.coef.shape, dtype=bool)
    for a in range(lay.d):
        j = lay.offset[a] + np.arange(lay.coef.shape[a])
        lo, hi = region.lo[a], region.hi[a]
        if lo < hi:
            ok = ((j + m + 1) / h > lo) & (j / h < hi)
        else:
            ok = (j / h < lo) & (lo < (j + m + 1) / h)
        shape = [1] * lay.d
        shape[a] = -1
        mask = mask & ok.reshape(shape)
    return mask


def restrict(e: SplineExpansion, region: Box | None, complement: bool = False) -> SplineExpansion:
    """Drop terms that vanish on ``region`` (or on its complement)."""
    out = SplineExpansion(e.m, e.d)
    for lay in e.layers:
        mask = _active_mask(lay, e.m, region, complement)
        nl = Layer(lay.k, lay.offset, np.where(mask, lay.coef, 0.0), region)
        out.add_layer(nl)
    return out


def greedy_select(layer: SplineExpansion, count: int, region: Box | None = None,
                  complement: bool = False) -> SplineExpansion:
    """Keep the ``count`` largest-magnitude coefficients active on the region.

    Ties are broken by lexicographic order of the shift.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    table = layer.level_table()
    if len(table) > 1:
        raise ValueError("greedy selection acts on a single level")
    out = SplineExpansion(layer.m, layer.d)
    if not table:
        return out
    k, (off, cf) = next(iter(table.items()))
    lay = Layer(k, off, cf)
    mask = _active_mask(lay, layer.m, region, complement)
    flat_idx = np.flatnonzero(mask.ravel())
    vals = cf.ravel()[flat_idx]
    # row-major flat index order is lexicographic order in j
    order = np.lexsort((flat_idx, -np.abs(vals)))
    keep = flat_idx[order[:count]]
    new = np.zeros(cf.size)
    new[keep] = cf.ravel()[keep]
    out.add_layer(Layer(k, off, new.reshape(cf.shape), region))
    return out


def _merge(parts, m, d) -> SplineExpansion:
    out = SplineExpansion(m, d)
    for e in parts:
        for lay in e.layers:
            if lay.n_terms:
                out.add_layer(lay)
    return out


def approximate(f, prof: SmoothnessProfile, params: BesovParams, budget: AdaptiveBudget,
                mode: str = "adaptive_i") -> PiecewiseSplineApprox:
    """Build the piecewise spline approximant for the requested mode."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    m, d, kb = budget.m, budget.d, budget.k_bar
    if mode == "adaptive_i" and not params.p >= params.r:
        raise PreconditionError("adaptive_i requires p >= r")
    if mode == "adaptive_ii" and not params.p < params.r:
        raise PreconditionError("adaptive_ii requires p < r")
    Qkb = project(f, m, kb, d)
    meta = {"k_bar": kb, "N_k": budget.N_k, "t": budget.t, "N": budget.N,
            "center": [float(v) for v in budget.center]}
    if mode == "uniform" or budget.degenerate:
        approx = PiecewiseSplineApprox(Qkb, SplineExpansion(m, d), None, mode, meta)
        _audit(approx, budget)
        return approx
    A = budget.region
    outer_parts = [restrict(Qkb, A, complement=True)]
    inner_lvl = budget.inner_level
    Qin = project(f, m, inner_lvl, d, region=A)
    inner_parts = [Qin]
    if mode == "adaptive_ii":
        prev = Qkb
        for k in budget.outer_tail_levels():
            cur = project(f, m, k, d)
            q = detail_layer(cur, prev)
            outer_parts.append(greedy_select(q, budget.n_k(k), A, complement=True))
            prev = cur
        prev = Qin
        for k in budget.inner_tail_levels():
            cur = project(f, m, k, d, region=A)
            q = detail_layer(cur, prev)
            inner_parts.append(greedy_select(q, budget.m_k(k), A))
            prev = cur
    approx = PiecewiseSplineApprox(_merge(outer_parts, m, d), _merge(inner_parts, m, d), A, mode, meta)
    _audit(approx, budget)
    return approx


def _audit(approx: PiecewiseSplineApprox, budget: AdaptiveBudget) -> None:
    C = budget.audit_constant()
    approx.meta["terms"] = approx.n_terms
    approx.meta["audit_bound"] = C * budget.N
    if approx.n_terms > C * budget.N:
        raise AuditError(f"{approx.n_terms} terms exceed audit bound {C * budget.N:.0f}")


def _finest(e: SplineExpansion, default: int) -> int:
    lv = [lay.k for lay in e.layers if lay.n_terms]
    return max(lv) if lv else default


def error_report(f, approx: PiecewiseSplineApprox, r: float = 2.0, g: int = 4,
                 extra_levels: int = 3) -> float:
    """L_r error (or sup error for ``r = inf``) by per-cell Gauss-Legendre quadrature."""
    d = approx.d
    omega = Box.unit(d)
    kb = approx.meta.get("k_bar", 0)
    lvl_out = _finest(approx.outer, kb) + extra_levels
    err_out = lambda x: np.asarray(f(x), dtype=float) - approx.outer.evaluate(x)
    if not approx._has_region():
        return lr_norm(err_out, [omega], lvl_out, g, r)
    A = approx.region
    lvl_in = _finest(approx.inner, kb) + extra_levels
    err_in = lambda x: np.asarray(f(x), dtype=float) - approx.inner.evaluate(x)
    pieces = complement_boxes(omega, A)
    if np.isinf(r):
        return max(lr_norm(err_out, pieces, lvl_out, g, r), lr_norm(err_in, [A], lvl_in, g, r))
    a = lr_norm(err_out, pieces, lvl_out, g, r) ** r if pieces else 0.0
    b = lr_norm(err_in, [A], lvl_in, g, r) ** r
    return float((a + b) ** (1.0 / r))


def epsilon_equivalent(N: float, s: float, delta: float, d: int, alpha: float) -> float:
    """Exponent gained by adaptivity: ``ln((ln N/ln ln N)^{(s-delta)d/alpha}) / ln N``."""
    if N < 16:
        raise PreconditionError("N must be at least 16")
    if math.isinf(alpha):
        return 0.0
    ln = math.log(N)
    return (s - delta) * d / alpha * math.log(ln / math.log(ln)) / ln


def truncate_terms(approx: PiecewiseSplineApprox, count: int) -> PiecewiseSplineApprox:
    """Keep the ``count`` largest-magnitude terms across both pieces."""
    rows = []
    for part, e in ((0, approx.outer), (1, approx.inner)):
        for k, j, a in e.terms():
            rows.append((-abs(a), part, k, tuple(int(v) for v in j), a))
    rows.sort()
    keep = rows[:count]
    out = []
    for part in (0, 1):
        e = SplineExpansion(approx.m, approx.d)
        sel = [r for r in keep if r[1] == part]
        for k in sorted({r[2] for r in sel}):
            js = np.array([r[3] for r in sel if r[2] == k], dtype=np.int64)
            a = np.array([r[4] for r in sel if r[2] == k])
            region = approx.region if part == 1 else None
            lay = layer_from_terms(k, js, a, region)
            lay.m_hint = approx.m
            e.add_layer(lay)
        out.append(e)
    meta = dict(approx.meta, truncated_to=count)
    return PiecewiseSplineApprox(out[0], out[1], approx.region, approx.mode, meta)
