"""Closed-form rate curves (natural logs) and log-log slope fitting."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import PreconditionError

CURVE_KINDS = ("deep_variable", "besov_fixed", "linear_lower", "approx_variable")


def nu_estimation(d: int, p: float) -> float:
    """``d (1/p - 1/2)_+``."""
    return d * max(1.0 / p - 0.5, 0.0)


def _grid(n, lo: float):
    a = np.atleast_1d(np.asarray(n, dtype=float))
    if np.any(a < lo):
        raise PreconditionError(f"grid values must be at least {lo:g}")
    return a


def _out(v, n):
    return float(v[0]) if np.ndim(n) == 0 else v


def estimation_curve_variable(n, s: float, d: int, alpha: float, nu: float = 0.0):
    a = _grid(n, 16)
    ln = np.log(a)
    e_n = -2 * s / (2 * s + d)
    if math.isinf(alpha):
        return _out(a ** e_n, n)
    e_log = -2 * (s * d - nu * d - 3 * alpha * s) / ((2 * s + d) * alpha)
    e_ll = 2 * d * (s - nu) / ((2 * s + d) * alpha)
    # log space: the loglog power overflows for small alpha and large d
    return _out(np.exp(e_n * np.log(a) + e_log * np.log(ln) + e_ll * np.log(np.log(ln))), n)


def estimation_curve_fixed(s: float, d: int, n):
    a = _grid(n, 1)
    return _out(a ** (-2 * s / (2 * s + d)), n)


def approx_curve_variable(N, s: float, d: int, alpha: float, delta: float = 0.0):
    a = _grid(N, 16)
    base = a ** (-s / d)
    if math.isinf(alpha) or s == delta:
        return _out(base, N)
    ln = np.log(a)
    return _out(base * (ln / np.log(ln)) ** (-(s - delta) / alpha), N)


def linear_lower_curve(n, s: float, nu: float, d: int):
    if not s > nu:
        raise PreconditionError("need s > nu")
    a = _grid(n, 1)
    sn = s - nu
    return _out(a ** (-2 * sn / (2 * sn + d)), n)


def fit_slope(xs, ys):
    """OLS of log y on log x; returns ``(slope, intercept, r2)``."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size < 3 or x.size != y.size:
        raise PreconditionError("need at least 3 paired points")
    if np.unique(x).size != x.size:
        raise PreconditionError("xs must be distinct")
    if np.any(y <= 0) or np.any(x <= 0):
        raise PreconditionError("xs and ys must be positive")
    lx, ly = np.log(x), np.log(y)
    A = np.vstack([lx, np.ones_like(lx)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = ly - (slope * lx + icpt)
    tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 if tot == 0 else float(1 - np.sum(res ** 2) / tot)
    return float(slope), float(icpt), r2


@dataclass
class RateSpec:
    s: float
    d: int
    alpha: float
    p: float = 2.0
    delta: float = 0.0
    nu: float | None = None
    n_min: float = 1e3
    n_max: float = 1e6
    points: int = 31
    s_fixed_shift: float = 5.0

    def __post_init__(self):
        if self.nu is None:
            self.nu = nu_estimation(self.d, self.p)
        if not (self.n_max > self.n_min >= 16):
            raise PreconditionError("need 16 <= n_min < n_max")
        if self.points < 2:
            raise PreconditionError("need at least 2 grid points")

    def grid(self) -> np.ndarray:
        return np.logspace(math.log10(self.n_min), math.log10(self.n_max), self.points)

    def to_json(self) -> dict:
        return asdict(self)


def rate_table(spec: RateSpec):
    """Rows ``(n, kind, value)`` for the variable curve and both fixed curves."""
    n = spec.grid()
    curves = [
        ("deep_variable", estimation_curve_variable(n, spec.s, spec.d, spec.alpha, spec.nu)),
        ("besov_fixed_s", estimation_curve_fixed(spec.s, spec.d, n)),
        ("besov_fixed_s_shift", estimation_curve_fixed(spec.s + spec.s_fixed_shift, spec.d, n)),
    ]
    if spec.s > spec.nu:
        curves.append(("linear_lower", linear_lower_curve(n, spec.s, spec.nu, spec.d)))
    rows = []
    for kind, vals in curves:
        rows.extend((float(x), kind, float(v)) for x, v in zip(n, vals))
    return rows
