"""Synthetic regression targets and samples."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .bspline import eval_univariate, index_range
from .estimators import RegressionSample
from .quasi_interp import Layer, SplineExpansion, coeff_besov_norm
from .smoothness import SmoothnessProfile

MAX_LEVELS = 8
_SUP_GRID = 4097


def _sincos(x):
    out = 0.5 * np.sin(2 * np.pi * x[:, 0])
    for i in range(1, x.shape[1]):
        out = out * np.cos(np.pi * x[:, i])
    return out


def _bump(x, center=0.5, radius=0.5):
    r2 = np.sum(((x - center) / radius) ** 2, axis=1)
    out = np.zeros(x.shape[0])
    ok = r2 < 1
    out[ok] = np.exp(-1.0 / (1.0 - r2[ok]))
    return out


CLOSED_FORMS = {"sincos": _sincos, "bump": _bump}


@dataclass
class TargetFunction:
    """Evaluator plus class tag, parameters and a membership diagnostic."""

    tag: str
    params: dict
    expansion: SplineExpansion | None = None
    background: "TargetFunction | None" = None
    sup_norm: float = float("nan")
    certificate: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.expansion.d if self.expansion is not None else int(self.params["d"])

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.expansion is not None:
            out = self.expansion.evaluate(x)
        elif "closed_form" in self.params:
            kw = {k: v for k, v in self.params.items() if k in ("center", "radius")}
            out = CLOSED_FORMS[self.params["closed_form"]](x, **kw)
        else:
            out = np.zeros(x.shape[0])
        if self.background is not None:
            out = out + self.background(x)
        return out

    def to_json(self) -> dict:
        out = {"tag": self.tag, "params": self.params, "sup_norm": self.sup_norm,
               "certificate": self.certificate}
        if self.expansion is not None:
            out["expansion"] = self.expansion.to_json()
        if self.background is not None:
            out["background"] = self.background.to_json()
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, obj) -> "TargetFunction":
        exp = SplineExpansion.from_json(obj["expansion"]) if obj.get("expansion") else None
        bg = cls.from_json(obj["background"]) if obj.get("background") else None
        return cls(obj["tag"], obj["params"], exp, bg, obj.get("sup_norm", float("nan")),
                   obj.get("certificate", {}))


def _sup_estimate(f, d: int) -> float:
    # fine grid in d=1, random points plus the grid diagonal otherwise
    if d == 1:
        x = np.linspace(0.0, 1.0, _SUP_GRID)[:, None]
    else:
        rng = np.random.default_rng(12345)
        x = np.vstack([rng.random((20000, d)), np.repeat(np.linspace(0, 1, 257)[:, None], d, 1)])
    return float(np.max(np.abs(f(x))))


def random_besov(s: float, p: float, q: float, K_levels: int, seed: int, d: int = 1,
                 m: int = 3) -> TargetFunction:
    """Random spline expansion with unit sequence-space Besov norm.

    Coefficients are i.i.d. uniform on [-1, 1]; level ``k`` is rescaled so its
    weighted norm ``2^{(s - d/p)k} ||a_k||_p`` equals ``K^{-1/q}``.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    if not 1 <= K_levels <= MAX_LEVELS:
        raise ValueError(f"K_levels must be in 1..{MAX_LEVELS}")
    rng = np.random.default_rng(seed)
    target = K_levels ** (-1.0 / q) if np.isfinite(q) else 1.0
    layers = []
    for k in range(K_levels):
        lo, hi = index_range(m, k, d)[0]
        shape = (hi - lo + 1,) * d
        a = rng.uniform(-1.0, 1.0, size=shape)
        a[a == 0] = 1e-300
        raw = float(np.max(np.abs(a))) if np.isinf(p) else float(np.sum(np.abs(a) ** p) ** (1 / p))
        w = 2.0 ** (k * s) if np.isinf(p) else 2.0 ** ((s - d / p) * k)
        layers.append(Layer(k, (lo,) * d, a * (target / (w * raw))))
    exp = SplineExpansion(m, d, layers)
    tf = TargetFunction("random_besov", {"s": s, "p": p, "q": q, "K_levels": K_levels,
                                         "seed": seed, "d": d, "m": m}, exp)
    tf.sup_norm = _sup_estimate(tf, d)
    tf.certificate = {"constant": 1.0, "diagnostic": "coeff_besov_norm",
                      "value": coeff_besov_norm(exp, s, p, q)}
    return tf


def _peak(m: int, d: int) -> float:
    return float(eval_univariate(m, (m + 1) / 2.0)) ** d


def _single(k: int, j, a: float, m: int, d: int) -> SplineExpansion:
    return SplineExpansion(m, d, [Layer(k, tuple(int(v) for v in j), np.full((1,) * d, a))])


def scaled_bspline_target(prof: SmoothnessProfile, k: int, j=None, p: float = 2.0,
                          m: int = 2) -> TargetFunction:
    """``2^{-k(s - d/p)} M_{k,j}`` with ``j`` chosen so the support contains ``c``."""
    d = prof.d
    c = np.asarray(prof.c, dtype=float)
    if j is None:
        j = np.floor(2.0 ** k * c - (m + 1) / 2.0 + 0.5).astype(np.int64)
    j = np.asarray(j, dtype=np.int64).reshape(d)
    lo, hi = j / 2.0 ** k, (j + m + 1) / 2.0 ** k
    if not np.all((lo <= c) & (c <= hi)):
        raise ValueError("support of the B-spline does not contain c")
    delta = 2.0 ** (-k * (prof.s - d / p))
    tf = TargetFunction("scaled_bspline", {"k": k, "j": j.tolist(), "p": p, "m": m,
                                           "profile": prof.to_json(), "d": d},
                        _single(k, j, delta, m, d))
    tf.sup_norm = delta * _peak(m, d)
    tf.certificate = {"constant": 1.0, "diagnostic": "seminorm",
                      "scale": delta}
    return tf


def one_hot_family(prof: SmoothnessProfile, k: int, seed: int, p: float = 2.0,
                   m: int = 2) -> TargetFunction:
    """``Delta * M_{k,j}`` with ``j`` uniform over the level-``k`` index set."""
    d = prof.d
    rng = np.random.default_rng(seed)
    lo, hi = index_range(m, k, d)[0]
    j = rng.integers(lo, hi + 1, size=d)
    delta = 2.0 ** (-k * (prof.s - d / p))
    tf = TargetFunction("one_hot", {"k": k, "j": j.tolist(), "p": p, "m": m, "seed": seed,
                                    "profile": prof.to_json(), "d": d},
                        _single(k, j, delta, m, d))
    tf.sup_norm = delta * _peak(m, d)
    tf.certificate = {"constant": 1.0, "diagnostic": "coeff_besov_norm", "scale": delta}
    return tf


def variable_target(prof: SmoothnessProfile, K_levels: int, k_spike: int, seed: int,
                    p: float = 2.0, q: float = 2.0, m: int = 3) -> TargetFunction:
    """Smooth random background at ``s_max`` plus a scaled spike at ``c``."""
    bg = random_besov(prof.s_max, p, q, K_levels, seed, d=prof.d, m=m)
    spike = scaled_bspline_target(prof, k_spike, p=p, m=m)
    tf = TargetFunction("variable", {"K_levels": K_levels, "k_spike": k_spike, "seed": seed,
                                     "p": p, "q": q, "m": m, "profile": prof.to_json(),
                                     "d": prof.d},
                        spike.expansion, bg)
    tf.sup_norm = _sup_estimate(tf, prof.d)
    tf.certificate = {"constant": None, "diagnostic": "seminorm"}
    return tf


def closed_form(name: str, d: int, **kw) -> TargetFunction:
    """Closed-form smooth target: ``sincos`` or the C-infinity ``bump``."""
    if name not in CLOSED_FORMS:
        raise ValueError(f"unknown closed form {name!r}")
    tf = TargetFunction(name, dict(kw, closed_form=name, d=d))
    tf.sup_norm = _sup_estimate(tf, d)
    tf.certificate = {"constant": None, "diagnostic": "seminorm"}
    return tf


def spike_target(prof: SmoothnessProfile, k: int, j=None, p: float = 2.0, m: int = 3,
                 background: str = "sincos") -> TargetFunction:
    """Closed-form smooth background plus ``scaled_bspline_target`` at ``c``."""
    spike = scaled_bspline_target(prof, k, j, p=p, m=m)
    bg = closed_form(background, prof.d)
    tf = TargetFunction("spike", dict(spike.params, background=background), spike.expansion, bg)
    tf.sup_norm = _sup_estimate(tf, prof.d)
    tf.certificate = {"constant": None, "diagnostic": "seminorm", "scale": spike.certificate["scale"]}
    return tf


def sample_regression(f, n: int, sigma: float, seed: int, d: int | None = None,
                      design: str = "uniform") -> RegressionSample:
    """``Y = f(X) + sigma * noise`` with ``X`` uniform on the unit cube."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if d is None:
        d = f.d
    rng = np.random.default_rng(seed)
    if design == "uniform":
        X = rng.random((n, d))
    elif design == "beta22":
        X = rng.beta(2.0, 2.0, size=(n, d))
    else:
        raise ValueError(f"unknown design {design!r}")
    noise = rng.standard_normal(n)
    Y = np.asarray(f(X), dtype=float) + sigma * noise
    return RegressionSample(X, Y, sigma, seed, design)
