"""Least-squares spline estimator, kernel-ridge baseline, and risk bounds."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .adaptive import AdaptiveBudget, PiecewiseSplineApprox, _active_mask
from .bspline import Box, index_range, design_matrix
from .errors import PreconditionError, VarbesovError
from .quasi_interp import Layer, SplineExpansion, detail_layer, layer_from_terms
from .smoothness import BesovParams, SmoothnessProfile

DENSE_COLS = 6000


@dataclass
class RegressionSample:
    X: np.ndarray
    Y: np.ndarray
    sigma: float = 0.0
    seed: int | None = None
    design: str = "uniform"

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.Y = np.asarray(self.Y, dtype=float).ravel()
        if self.X.shape[0] != self.Y.shape[0]:
            raise ValueError("X and Y lengths differ")

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def to_csv(self) -> str:
        cols = [f"x_{i + 1}" for i in range(self.d)] + ["y"]
        lines = ["# varbesov-csv v1", ",".join(cols)]
        for x, y in zip(self.X, self.Y):
            lines.append(",".join(repr(float(v)) for v in (*x, y)))
        return "\n".join(lines) + "\n"


@dataclass
class FittedEstimator:
    kind: str
    F: float | None
    approx: PiecewiseSplineApprox | None = None
    X: np.ndarray | None = None
    dual: np.ndarray | None = None
    bandwidth: float | None = None
    lam: float | None = None
    info: dict = field(default_factory=dict)

    def raw(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "adaptive_ls":
            return self.approx.evaluate(x)
        return gaussian_kernel(x, self.X, self.bandwidth) @ self.dual

    def predict(self, x) -> np.ndarray:
        y = self.raw(x)
        if self.kind == "adaptive_ls" and self.F is not None:
            y = np.clip(y, -self.F, self.F)
        return y

    __call__ = predict

    def to_json(self) -> dict:
        out = {"kind": self.kind, "F": self.F, "info": self.info}
        if self.kind == "adaptive_ls":
            out["approx"] = self.approx.to_json()
        else:
            out.update(X=self.X.tolist(), dual=self.dual.tolist(),
                       bandwidth=self.bandwidth, lam=self.lam)
        return out


# ------------------------------------------------------------ adaptive LS

@dataclass
class _Block:
    k: int
    offset: tuple
    shape: tuple
    keep: np.ndarray          # flat indices into the box
    where: str                # "all", "outer" or "inner"


def _full_block(m: int, k: int, d: int, region: Box | None, where: str) -> _Block:
    lo, hi = index_range(m, k, d)[0]
    shape = (hi - lo + 1,) * d
    lay = Layer(k, (lo,) * d, np.ones(shape))
    if where == "outer":
        mask = _active_mask(lay, m, region, complement=True)
    elif where == "inner":
        mask = _active_mask(lay, m, region, complement=False)
    else:
        mask = np.ones(shape, dtype=bool)
    return _Block(k, (lo,) * d, shape, np.flatnonzero(mask.ravel()), where)


def _block_matrix(m: int, blk: _Block, X: np.ndarray, inside: np.ndarray | None) -> sp.csr_matrix:
    B = design_matrix(m, blk.k, X, blk.offset, blk.shape)[:, blk.keep]
    if inside is not None and blk.where != "all":
        rowmask = ~inside if blk.where == "outer" else inside
        B = sp.diags(rowmask.astype(float)) @ B
    return B.tocsr()


def _solve_ls(B: sp.csr_matrix, Y: np.ndarray, ridge: float):
    """Ridge-regularized normal equations; returns (coef, condition estimate)."""
    p = B.shape[1]
    G = (B.T @ B).tocsc()
    rhs = B.T @ Y
    if p <= DENSE_COLS:
        Gd = G.toarray() + ridge * np.eye(p)
        try:
            c, low = sla.cho_factor(Gd, check_finite=False)
            coef = sla.cho_solve((c, low), rhs, check_finite=False)
        except sla.LinAlgError:
            coef = sla.solve(Gd, rhs, assume_a="sym")
        cond = float(np.linalg.cond(Gd)) if p <= 1500 else None
        return coef, cond
    from scipy.sparse.linalg import spsolve
    return spsolve(G + ridge * sp.identity(p, format="csc"), rhs), None


def _pilot(m: int, k: int, d: int, X, Y, ridge: float) -> SplineExpansion:
    blk = _full_block(m, k, d, None, "all")
    coef, _ = _solve_ls(_block_matrix(m, blk, X, None), Y, ridge)
    full = np.zeros(int(np.prod(blk.shape)))
    full[blk.keep] = coef
    return SplineExpansion(m, d, [Layer(k, blk.offset, full.reshape(blk.shape))])


def _greedy_block(m: int, q: SplineExpansion, count: int, region: Box | None, where: str) -> _Block:
    k, (off, cf) = next(iter(q.level_table().items()))
    lay = Layer(k, off, cf)
    if where == "outer":
        mask = _active_mask(lay, m, region, complement=True)
    elif where == "inner":
        mask = _active_mask(lay, m, region, complement=False)
    else:
        mask = np.ones(cf.shape, dtype=bool)
    flat = np.flatnonzero(mask.ravel())
    vals = cf.ravel()[flat]
    order = np.lexsort((flat, -np.abs(vals)))
    keep = np.sort(flat[order[:count]])
    return _Block(k, off, cf.shape, keep, where)


PILOT_POINTS = 8


def pilot_cap(n: int, m: int, d: int) -> int:
    """Finest level with at least ``PILOT_POINTS`` samples per basis function."""
    k = 0
    while (2 ** (k + 1) + m) ** d <= n / PILOT_POINTS:
        k += 1
    return k


def dictionary(sample: RegressionSample, budget: AdaptiveBudget, mode: str, ridge: float):
    """Column blocks of the adaptive dictionary.

    Uniform and degenerate budgets use the full level ``k_bar``; regime i adds
    the refined level on the box; regime ii also adds greedy detail terms
    picked from least-squares pilot fits (levels above the pilot cap are
    skipped because the data cannot resolve them).
    """
    m, d, kb = budget.m, budget.d, budget.k_bar
    notes = []
    if mode == "uniform" or budget.degenerate:
        return [_full_block(m, kb, d, None, "all")], None, notes
    A = budget.region
    blocks = [_full_block(m, kb, d, A, "outer"), _full_block(m, budget.inner_level, d, A, "inner")]
    if mode == "adaptive_ii":
        X, Y = sample.X, sample.Y
        cap = pilot_cap(sample.n, m, d)
        pilots = {}

        def pilot(k):
            if k not in pilots:
                pilots[k] = _pilot(m, k, d, X, Y, ridge)
            return pilots[k]

        skipped = 0
        for k in budget.outer_tail_levels():
            if k > cap:
                skipped += 1
                continue
            q = detail_layer(pilot(k), pilot(k - 1))
            blocks.append(_greedy_block(m, q, budget.n_k(k), A, "outer"))
        for k in budget.inner_tail_levels():
            if k > cap:
                skipped += 1
                continue
            q = detail_layer(pilot(k), pilot(k - 1))
            blocks.append(_greedy_block(m, q, budget.m_k(k), A, "inner"))
        if skipped:
            notes.append(f"{skipped} greedy levels above pilot cap {cap} skipped")
    return blocks, A, notes


def fit_adaptive_ls(sample: RegressionSample, prof: SmoothnessProfile, params: BesovParams,
                    budget: AdaptiveBudget, F: float | None = None, ridge: float | None = None,
                    mode: str | None = None) -> FittedEstimator:
    """Least squares over the adaptive B-spline dictionary, clipped at ``F``."""
    if sample.n < 1:
        raise PreconditionError("need at least one observation")
    if F is None:
        F = max(1.0, float(np.max(np.abs(sample.Y))))
    if F < 1:
        raise PreconditionError("F must be at least 1")
    if mode is None:
        mode = "adaptive_i" if params.p >= params.r else "adaptive_ii"
    if ridge is None:
        ridge = 1e-8 * sample.n
    t0 = time.perf_counter()
    m, d = budget.m, budget.d
    blocks, A, notes = dictionary(sample, budget, mode, ridge)
    inside = A.contains(sample.X) if A is not None else None
    mats = [_block_matrix(m, b, sample.X, inside) for b in blocks]
    ncols = sum(M.shape[1] for M in mats)
    if ncols == 0:
        raise VarbesovError("empty dictionary")
    B = sp.hstack(mats, format="csr")
    coef, cond = _solve_ls(B, sample.Y, ridge)
    outer = SplineExpansion(m, d)
    inner = SplineExpansion(m, d)
    pos = 0
    for b in blocks:
        c = coef[pos:pos + b.keep.size]
        pos += b.keep.size
        js = np.array(np.unravel_index(b.keep, b.shape)).T + np.asarray(b.offset)
        lay = layer_from_terms(b.k, js.reshape(-1, d), c, A if b.where == "inner" else None)
        (inner if b.where == "inner" else outer).add_layer(lay)
    approx = PiecewiseSplineApprox(outer, inner, A, mode if not budget.degenerate else "uniform",
                                   {"k_bar": budget.k_bar, "N": budget.N, "t": budget.t,
                                    "center": list(budget.center)})
    info = {"columns": int(ncols), "ridge": ridge, "cond": cond, "notes": notes,
            "fit_seconds": time.perf_counter() - t0}
    return FittedEstimator("adaptive_ls", float(F), approx=approx, info=info)


# ------------------------------------------------------------ kernel ridge

def gaussian_kernel(X1, X2, h: float) -> np.ndarray:
    X1 = np.atleast_2d(X1)
    X2 = np.atleast_2d(X2)
    sq = (np.sum(X1 ** 2, 1)[:, None] + np.sum(X2 ** 2, 1)[None, :] - 2.0 * X1 @ X2.T)
    return np.exp(-np.maximum(sq, 0.0) / (2.0 * h * h))


def median_bandwidth(X, max_points: int = 1000) -> float:
    X = np.atleast_2d(X)[:max_points]
    if X.shape[0] < 2:
        return 1.0
    diff = X[:, None, :] - X[None, :, :]
    dist = np.sqrt(np.sum(diff ** 2, axis=2))
    iu = np.triu_indices(X.shape[0], 1)
    h = float(np.median(dist[iu]))
    return h if h > 0 else 1.0


LAMBDA_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)


def _krr_dual(K: np.ndarray, Y: np.ndarray, lam: float) -> np.ndarray:
    A = K + lam * np.eye(K.shape[0])
    jitter = 0.0
    for _ in range(6):
        try:
            c = sla.cho_factor(A + jitter * np.eye(K.shape[0]), lower=True, check_finite=False)
            return sla.cho_solve(c, Y, check_finite=False)
        except sla.LinAlgError:
            jitter = max(jitter * 10, 1e-12 * max(1.0, float(np.trace(K)) / K.shape[0]))
    w = np.linalg.eigvalsh(A)
    raise VarbesovError(f"kernel matrix not positive definite: min eig {w[0]:.3g}, max {w[-1]:.3g}")


def fit_kernel_ridge(sample: RegressionSample, bandwidth: float | None = None,
                     lam: float | None = None, lam_grid=LAMBDA_GRID, bandwidth_grid=None,
                     val_frac: float = 0.25, seed: int = 0,
                     select_max: int = 2048) -> FittedEstimator:
    """Gaussian kernel ridge ``k(x)^T (K + lam I)^{-1} Y``.

    Missing ``bandwidth`` uses the median pairwise distance; missing ``lam``
    is picked from ``lam_grid`` on a held-out split of at most ``select_max``
    points, then the model is refit on all data.
    """
    t0 = time.perf_counter()
    X, Y = sample.X, sample.Y
    chosen = {}
    if bandwidth is None and bandwidth_grid is None:
        bandwidth = median_bandwidth(X)
        chosen["bandwidth_rule"] = "median"
    hs = [bandwidth] if bandwidth is not None else list(bandwidth_grid)
    lams = [lam] if lam is not None else list(lam_grid)
    if lam is not None and lam <= 0:
        raise PreconditionError("lambda must be positive")
    if len(hs) * len(lams) > 1:
        rng = np.random.default_rng(seed)
        perm = rng.permutation(sample.n)[:select_max]
        nv = max(1, int(round(val_frac * perm.size)))
        vi, ti = perm[:nv], perm[nv:]
        if ti.size == 0:
            ti = vi
        best = None
        for h in hs:
            Kt = gaussian_kernel(X[ti], X[ti], h)
            Kv = gaussian_kernel(X[vi], X[ti], h)
            for lv in lams:
                err = float(np.mean((Kv @ _krr_dual(Kt, Y[ti], lv) - Y[vi]) ** 2))
                if best is None or err < best[0]:
                    best = (err, h, lv)
        _, bandwidth, lam = best
        chosen["validation_mse"] = best[0]
    else:
        bandwidth, lam = hs[0], lams[0]
    dual = _krr_dual(gaussian_kernel(X, X, bandwidth), Y, lam)
    info = dict(chosen, bandwidth=bandwidth, lam=lam, fit_seconds=time.perf_counter() - t0)
    return FittedEstimator("kernel_ridge", None, X=X.copy(), dual=dual, bandwidth=float(bandwidth),
                           lam=float(lam), info=info)


# ------------------------------------------------------------ risk and bounds

def empirical_risk(est, f, M: int = 10_000, seed: int = 0, d: int | None = None):
    """Monte-Carlo L2(P_X) risk under the uniform design; returns (mean, stderr)."""
    if M < 1:
        raise PreconditionError("M must be at least 1")
    if d is None:
        d = est.X.shape[1] if getattr(est, "X", None) is not None else est.approx.d
    x = np.random.default_rng(seed).random((M, d))
    e = (np.asarray(f(x), dtype=float) - np.asarray(est(x), dtype=float)) ** 2
    se = float(e.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    return float(e.mean()), se


def covering_bound(stats, delta: float) -> float:
    """Log covering number bound ``2SL ln((B v 1)(W+1)) + S ln(L/delta)``."""
    if delta <= 0:
        raise PreconditionError("delta must be positive")
    S, L, W, B = stats.S, stats.L, stats.W, stats.B
    if S == 0:
        return 0.0
    return 2.0 * S * L * math.log(max(B, 1.0) * (W + 1)) + S * math.log(L / delta)


def oracle_risk_bound(approx_err: float, cover_log: float, n: int, F: float, sigma: float,
                      delta: float) -> float:
    if min(approx_err, cover_log, F, sigma, delta) < 0 or n < 1:
        raise PreconditionError("arguments must be nonnegative and n >= 1")
    return approx_err ** 2 + (F ** 2 + sigma ** 2) * cover_log / n + delta * (F + sigma)


def terms_for_sample_size(n: int, s: float, d: int, const: float = 1.0) -> int:
    """``N ~ n^{d/(2s+d)}``."""
    return max(2 ** d, int(round(const * n ** (d / (2 * s + d)))))
