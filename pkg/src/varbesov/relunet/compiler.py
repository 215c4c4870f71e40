"""Standalone gadget networks and the spline-to-network compiler."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..adaptive import PiecewiseSplineApprox
from ..bspline import Box, eval_univariate
from ..errors import AuditError, PreconditionError
from ..smoothness import BesovParams, SmoothnessProfile
from . import gadgets as G
from .builder import Builder, const, lin
from .network import NetworkStats, ReluNetwork


def c_dm(d: int, m: int) -> float:
    """``2 + 2 d e (2e)^m / sqrt(m)``."""
    return 2.0 + 2.0 * d * math.e * (2.0 * math.e) ** m / math.sqrt(m)


def bspline_net_budget(m: int, d: int, eps: float) -> NetworkStats:
    """``(L0, W0, S0, B0)`` for the single B-spline network."""
    dm = max(d, m)
    L0 = 3 + 2 * math.ceil(math.log2(3 ** dm / (eps * c_dm(d, m))) + 5) * math.ceil(math.log2(dm))
    W0 = 6 * d * m * (m + 2) + 2 * d
    return NetworkStats(L=L0, W=W0, S=L0 * W0 ** 2, B=2.0 * (m + 1) ** m)


def W1(d: int, m: int) -> int:
    return 6 * d * m * (m + 2) + 4 * d + 2


def compile_depth_bound(d: int, m: int, eps: float) -> int:
    dm = max(d + 1, m)
    return 4 + 3 * math.ceil(math.log2(3 ** dm / (eps * c_dm(d, m))) + 5) * math.ceil(math.log2(dm))


def mult_depth_bound(D: int, eps: float) -> int:
    return math.ceil(math.log2(3 ** D / eps) + 5) * math.ceil(math.log2(D))


# ---------------------------------------------------------------- gadgets

def build_square(eps: float, stages: int | None = None) -> ReluNetwork:
    """Sawtooth approximation of ``x^2`` on [0, 1]."""
    if not 0 < eps < 1:
        raise PreconditionError("need 0 < eps < 1")
    S = stages if stages is not None else math.ceil(math.log2(1.0 / eps))
    bd = Builder(1)
    return bd.build(G.square(bd, bd.input(0, nonneg=True), S))


def mult_stages(D: int, eps: float) -> int:
    return G.stages_for(eps / 3 ** G.tree_depth(D))


def build_mult(D: int, eps: float) -> ReluNetwork:
    """Product of D inputs in [0, 1]; bitwise zero if any input is zero."""
    if D < 2:
        raise PreconditionError("need D >= 2")
    if not 0 < eps < 1:
        raise PreconditionError("need 0 < eps < 1")
    bd = Builder(D)
    return bd.build(G.mult_tree(bd, bd.inputs(nonneg=True), mult_stages(D, eps)))


def _split_stages(m: int, D: int, d: int, eps: float):
    """Stage counts (univariate, product tree) meeting ``eps`` with least depth.

    ``D`` factors enter the clamped product tree, ``d`` of which are B-splines.
    """
    best = None
    pw_levels = G.tree_depth(m)
    tr_levels = G.tree_depth(D)
    for s1 in range(1, 40):
        e1 = d * G.univariate_error(m, s1)
        if e1 >= eps:
            continue
        for s2 in range(1, 40):
            if e1 + (G.tree_error(D, s2) if D > 1 else 0.0) <= eps:
                depth = s1 * pw_levels + (s2 + 2) * tr_levels
                key = (depth, s1 + s2)
                if best is None or key < best[0]:
                    best = (key, s1, s2)
                break
    if best is None:
        raise PreconditionError(f"cannot meet eps={eps}")
    return best[1], best[2]


def build_bspline(m: int, d: int, eps: float) -> ReluNetwork:
    """Network for ``M(x) = prod N(x_i)``; exactly zero off ``[0, m+1]^d``."""
    if not 0 < eps < 1:
        raise PreconditionError("need 0 < eps < 1")
    s1, s2 = _split_stages(m, d, d, eps)
    bd = Builder(d)
    factors = [G.univariate_bspline(bd, x, m, s1) for x in bd.inputs()]
    return bd.build(G.mult_tree(bd, factors, s2))


def build_indicator(c, t: float, xi: float, orientation: str = "inner") -> ReluNetwork:
    """Ramp indicator of ``[c - t, c + t]^d``: product of per-axis ramps (inner)
    or the complementary ramp ``min(1, max_i (1 - g_i))`` (outer).

    The per-axis ramps are exact; for d >= 2 the inner product uses the
    exact-zero multiplier at accuracy 1e-6.
    """
    if xi <= 0 or t <= 0:
        raise PreconditionError("need xi > 0 and t > 0")
    c = np.atleast_1d(np.asarray(c, dtype=float))
    d = c.size
    bd = Builder(d)
    gs = [G.indicator_ramp(bd, x, float(ci), t, xi) for x, ci in zip(bd.inputs(), c)]
    if orientation == "inner":
        out = gs[0] if d == 1 else G.mult_tree(bd, gs, mult_stages(d, 1e-6))
    elif orientation == "outer":
        out = G.outer_ramp(bd, gs)
    else:
        raise ValueError("orientation must be 'inner' or 'outer'")
    return bd.build(out)


def ramp_values(x, c, t: float, xi: float) -> np.ndarray:
    """Exact per-axis ramps ``g_i(x_i)`` (n x d)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    c = np.asarray(c, dtype=float)
    z1 = (x - c + t) / xi
    z2 = (x - c - t) / xi
    r = np.maximum
    return 1.0 - r(1.0 - r(z1 + 1.0, 0), 0) - r(1.0 - r(1.0 - z2, 0), 0)


def outer_values(g: np.ndarray) -> np.ndarray:
    return np.minimum(1.0, np.max(1.0 - g, axis=1))


# ---------------------------------------------------------------- compiler

@dataclass
class CompileReport:
    eps: float
    xi: float
    eps_admissible: float
    xi_bound: float
    measured_error: float
    measured_error_exact: float
    audit_points: int
    stats: NetworkStats
    bounds: dict
    within_bounds: dict
    n_terms: int
    partition: dict
    stages: dict
    worst_point: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def budgets_ok(self) -> bool:
        return all(self.within_bounds.values())

    def to_json(self) -> dict:
        return {
            "eps": self.eps, "xi": self.xi, "eps_admissible": self.eps_admissible,
            "xi_bound": self.xi_bound, "measured_error": self.measured_error,
            "measured_error_exact": self.measured_error_exact, "audit_points": self.audit_points,
            "stats": self.stats.to_json(), "bounds": self.bounds,
            "within_bounds": self.within_bounds, "budgets_ok": self.budgets_ok,
            "n_terms": self.n_terms, "partition": self.partition, "stages": self.stages,
            "worst_point": self.worst_point, "notes": self.notes,
        }


def compiler_nu(d: int, s: float, delta: float) -> float:
    """``0.5 * min(d (s - delta)/delta, 1)``; distinct from the estimation-rate nu."""
    if delta == 0:
        return 0.5
    return 0.5 * min(d * (s - delta) / delta, 1.0)


def eps_admissible(N: float, prof: SmoothnessProfile, params: BesovParams) -> float:
    d = params.d
    s, a, delta = prof.s, prof.alpha, params.delta
    nu = compiler_nu(d, s, delta)
    e = max(d / params.p - s, 0.0)
    ln = math.log(N)
    return (N ** (-((1 / nu + 1 / d) * e + s / d)) * ln ** (-e / a - 1 - (s - delta) / a)
            * math.log(ln) ** ((s - delta) / a))


def xi_bound(eps: float, F: float, t: float, d: int, r: float) -> float:
    if math.isinf(r):
        return t / 2 ** d
    return min(eps ** r / (F ** r * t ** (d - 1) * (d + 1)), t / 2 ** d)


def A_N(N: float, prof: SmoothnessProfile, params: BesovParams) -> float:
    d, s, a, r, delta = params.d, prof.s, prof.alpha, params.r, params.delta
    nu = compiler_nu(d, s, delta)
    e = max(d / params.p - s, 0.0)
    ln = math.log(N)
    return (N ** (r * (s / d + (1 / nu + 1 / d) * e)) * ln ** (r / a * e + r)
            * (ln / math.log(ln)) ** ((-d + 1 + s * r - r * delta) / a))


def B_N(N: float, prof: SmoothnessProfile, params: BesovParams) -> float:
    d, s, a, delta = params.d, prof.s, prof.alpha, params.delta
    nu = compiler_nu(d, s, delta)
    e = max(1.0, max(d / params.p - s, 0.0))
    return N ** ((1 / nu + 1 / d) * e) * math.log(N) ** (e / a)


def _support_box(k: int, j, m: int):
    h = 2.0 ** -k
    j = np.asarray(j, dtype=float)
    return j * h, (j + m + 1) * h


def _classify(kind: str, k: int, j, m: int, region: Box, xi: float, c, t: float) -> str:
    """Which indicator a term needs: 'inner', 'outer', or 'none'."""
    lo, hi = _support_box(k, j, m)
    lo = np.maximum(lo, 0.0)
    hi = np.minimum(hi, 1.0)
    c = np.asarray(c, dtype=float)
    if kind == "inner":
        # ramp g == 1 on the whole support
        if np.all(lo >= c - t) and np.all(hi <= c + t):
            return "none"
        return "inner"
    # outer ramp == 1 on the support if some axis stays beyond the band
    if np.any((hi <= c - t - xi) | (lo >= c + t + xi)):
        return "none"
    return "outer"


def ramped_eval(approx: PiecewiseSplineApprox, x, xi: float) -> np.ndarray:
    """``outer * h + inner * g`` with exact ramps (equals f_N off the band)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if not approx._has_region():
        return approx.outer.evaluate(x)
    A = approx.region
    c = (np.asarray(A.lo) + np.asarray(A.hi)) / 2
    t = float(approx.meta.get("t", (A.hi[0] - A.lo[0]) / 2))
    g = ramp_values(x, approx.meta.get("center", c), t, xi)
    gi = np.prod(g, axis=1)
    ho = outer_values(g)
    return approx.outer.evaluate(x) * ho + approx.inner.evaluate(x) * gi


def _active_abs_sum(approx: PiecewiseSplineApprox, x: np.ndarray) -> np.ndarray:
    m = approx.m
    out = np.zeros(x.shape[0])
    for e in (approx.outer, approx.inner):
        for k, j, a in e.terms():
            y = (2.0 ** k) * x - np.asarray(j, dtype=float)
            on = np.all((y > 0) & (y < m + 1), axis=1)
            out += abs(a) * on
    return out


def audit_points(d: int, n: int, region: Box | None, xi: float, seed: int = 0) -> np.ndarray:
    """Tensor grid plus random points plus a cluster around the box and its band."""
    per = max(2, int(round(n ** (1.0 / d))))
    ax = np.linspace(0.0, 1.0, per)
    grid = np.stack([g.ravel() for g in np.meshgrid(*([ax] * d), indexing="ij")], axis=1)
    rng = np.random.default_rng(seed)
    pts = [grid, rng.random((n, d))]
    if region is not None and not region.empty:
        lo = np.maximum(np.asarray(region.lo) - 2 * xi, 0.0)
        hi = np.minimum(np.asarray(region.hi) + 2 * xi, 1.0)
        pts.append(lo + (hi - lo) * rng.random((n // 2, d)))
    return np.vstack(pts)


def compile_approx(approx: PiecewiseSplineApprox, eps: float, xi: float | None = None,
                   prof: SmoothnessProfile | None = None, params: BesovParams | None = None,
                   F: float | None = None, n_audit: int = 10_000, N_budget: int | None = None,
                   enforce_admissible: bool = True, seed: int = 0):
    """Compile a piecewise spline approximant into a single ReLU network.

    Every term becomes ``phi_mult(N(2^k x_1 - j_1), ..., N(2^k x_d - j_d), ramps)``
    and the top layer combines them linearly.  Returns ``(network, report)``.
    """
    d, m = approx.d, approx.m
    terms = [("outer", k, j, a) for k, j, a in approx.outer.terms()]
    if approx._has_region():
        terms += [("inner", k, j, a) for k, j, a in approx.inner.terms()]
    n_terms = len(terms)
    if n_terms == 0:
        raise PreconditionError("approximant has no terms")
    N = N_budget if N_budget is not None else max(n_terms, 16)
    notes = []
    if not 0 < eps < 1:
        raise PreconditionError("need 0 < eps < 1")
    adm = float("inf")
    if prof is not None and params is not None:
        adm = eps_admissible(max(N, 16), prof, params)
        if eps > adm:
            msg = f"eps={eps:g} exceeds the admissible bound {adm:.6g}"
            if enforce_admissible:
                raise PreconditionError(msg)
            notes.append(msg)
    has_region = approx._has_region()
    r = params.r if params is not None else 2.0
    if F is None:
        F = max(1.0, max(abs(a) for *_, a in terms))
    if has_region:
        A = approx.region
        center = np.asarray(approx.meta.get("center", (np.asarray(A.lo) + np.asarray(A.hi)) / 2))
        t = float(approx.meta.get("t", (A.hi[0] - A.lo[0]) / 2))
        xb = xi_bound(eps, F, t, d, r)
        if xi is None:
            xi = xb
        if xi > xb * (1 + 1e-12):
            raise PreconditionError(f"xi={xi:g} exceeds the bound {xb:.6g}")
    else:
        center, t, xb = None, 0.0, float("inf")
        xi = xi if xi is not None else 1.0

    kinds = []
    for kind, k, j, a in terms:
        kinds.append(_classify(kind, k, j, m, approx.region, xi, center, t) if has_region else "none")
    n_ramp = max([d if kd == "inner" else (1 if kd == "outer" else 0) for kd in kinds] or [0])
    D = d + n_ramp
    s1, s2 = _split_stages(m, D, d, eps)

    bd = Builder(d)
    xs = bd.inputs()
    gs = None
    hsig = None
    if has_region:
        gs = [G.indicator_ramp(bd, x, float(ci), t, xi) for x, ci in zip(xs, center)]
        if any(kd == "outer" for kd in kinds):
            hsig = G.outer_ramp(bd, gs)
    outs = []
    part = {"E_A": 0, "E_Ac": 0, "E_B": 0}
    for (kind, k, j, a), kd in zip(terms, kinds):
        scale = 2.0 ** k
        fac = [G.univariate_bspline(bd, lin([(scale, xs[i])], -float(j[i])), m, s1) for i in range(d)]
        if kd == "inner":
            fac += list(gs)
            part["E_A"] += 1
        elif kd == "outer":
            fac.append(hsig)
            part["E_Ac"] += 1
        else:
            part["E_B"] += 1
        outs.append((a, G.mult_tree(bd, fac, s2)))
    aligned = bd.align([s for _, s in outs])
    out = lin([(a, s) for (a, _), s in zip(outs, aligned)])
    net = bd.build(out)

    # audit
    pts = audit_points(d, n_audit, approx.region if has_region else None, xi, seed)
    y_net = net.eval(pts)
    y_ramp = ramped_eval(approx, pts, xi) if has_region else approx.outer.evaluate(pts)
    bound = eps * _active_abs_sum(approx, pts)
    diff = np.abs(y_net - y_ramp)
    slack = 1e-12 * (1.0 + np.abs(y_ramp))
    worst = int(np.argmax(diff - bound))
    measured = float(diff.max())
    if has_region:
        gv = ramp_values(pts, center, t, xi)
        off_band = ~np.any((np.abs(pts - center) > t) & (np.abs(pts - center) < t + xi), axis=1)
    else:
        off_band = np.ones(len(pts), dtype=bool)
    exact = approx.evaluate(pts)
    meas_exact = float(np.abs(y_net - exact)[off_band].max()) if np.any(off_band) else 0.0

    st = net.stats()
    Lb = compile_depth_bound(d, m, eps)
    w1 = W1(d, m)
    bounds = {"L": Lb, "W": N * w1, "S": ((Lb - 1) * w1 ** 2 + 1) * N, "W1": w1,
              "c_dm": c_dm(d, m), "N": N}
    within = {"L": st.L <= Lb, "W": st.W <= N * w1, "S": st.S <= bounds["S"]}
    if prof is not None and params is not None:
        an, bn = A_N(max(N, 16), prof, params), B_N(max(N, 16), prof, params)
        bounds.update({"A_N": an, "B_N": bn, "B_formula": max(an, bn)})
        within["B_formula"] = st.B <= max(an, bn)
    kmax = max(k for _, k, _, _ in terms)
    bounds["B_construction"] = max(2.0 * (m + 1) ** m, 1.0 / xi if has_region else 0.0,
                                   2.0 ** (kmax + 1) + m + 1 + 2.0 ** (kmax + 1),
                                   max(abs(a) for *_, a in terms), 4.0)
    within["B_construction"] = st.B <= bounds["B_construction"]
    rep = CompileReport(eps=eps, xi=float(xi), eps_admissible=adm, xi_bound=xb,
                        measured_error=measured, measured_error_exact=meas_exact,
                        audit_points=len(pts), stats=st, bounds=bounds, within_bounds=within,
                        n_terms=n_terms, partition=part, stages={"bspline": s1, "product": s2},
                        worst_point=[float(v) for v in pts[worst]], notes=notes)
    if np.any(diff > bound + slack):
        raise AuditError(f"audit failed at {pts[worst].tolist()}: |diff|={diff[worst]:.3g} "
                         f"> bound {bound[worst]:.3g}", pts[worst], float(diff[worst]))
    return net, rep
