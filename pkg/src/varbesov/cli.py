"""Command-line entry point: ``varbesov <subcommand> [--config PATH] ...``.

Settings are resolved in increasing precedence: built-in defaults, the YAML
config file, ``--set key.path=value`` overrides, then the common flags
(``--seed``, ``--threads``).
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import platform
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy
import yaml

from . import __version__
from .adaptive import (
    DegenerateBudgetWarning, approximate, error_report, plan_budget, truncate_terms,
)
from .errors import AuditError, ConfigError, PreconditionError, VarbesovError
from .estimators import empirical_risk, fit_adaptive_ls, fit_kernel_ridge, terms_for_sample_size
from .rates import RateSpec, rate_table
from .relunet import compile_approx
from .relunet.network import ReluNetwork
from .smoothness import BesovParams, SmoothnessProfile, check_log_holder, seminorm
from .synth import (
    closed_form, one_hot_family, random_besov, sample_regression, scaled_bspline_target,
    spike_target, variable_target,
)

CSV_HEADER = "# varbesov-csv v1"

_PROFILE = {"s": 1.0, "beta": 3.0, "alpha": 0.3, "c": [0.5, 0.5]}
_BESOV = {"p": 2.0, "q": 2.0, "r": 2.0}

DEFAULTS = {
    "approx": {
        "profile": _PROFILE, "besov": _BESOV, "m": 3,
        "target": {"kind": "spike", "k": 7},
        "N_grid": [256, 512, 1024, 2048, 4096],
        "modes": ["uniform", "adaptive_i"],
        "error_r": None,
    },
    "compile": {
        "profile": {"s": 1.0, "beta": 3.0, "alpha": 0.5, "c": [0.5, 0.5]}, "besov": _BESOV,
        "m": 2, "N": 64, "mode": "adaptive_i",
        "target": {"kind": "spike", "k": 5},
        "truncate": 64, "eps": None, "xi": None, "F": None, "n_audit": 10000,
        "enforce_admissible": True,
    },
    "estimate": {
        "profile": {"s": 1.5, "beta": 0.0, "alpha": 1.0, "c": [0.5]}, "besov": _BESOV,
        "m": 3, "target": {"kind": "random_besov", "K_levels": 8},
        "n_grid": [128, 256, 512, 1024], "reps": 5, "sigma": 0.3, "test_points": 10000,
        "estimators": ["adaptive_ls"], "N_const": 1.0, "F": None,
    },
    "compare-linear": {
        "profile": {"s": 1.0, "beta": 1.0, "alpha": 1.0, "c": [0.5]},
        "besov": {"p": 1.0, "q": 2.0, "r": 2.0},
        "m": 2, "target": {"kind": "one_hot"},
        "n_grid": [512, 1024, 2048], "reps": 5, "sigma": 0.3, "test_points": 10000,
        "estimators": ["adaptive_ls", "kernel_ridge"], "N_const": 1.0, "F": None,
    },
    "rates": {"s": 1.0, "d": 15, "alpha": 0.2, "p": 2.0, "delta": 0.0, "nu": None,
              "n_min": 1e3, "n_max": 1e6, "points": 31, "s_fixed_shift": 5.0},
    "diagnose": {
        "profile": _PROFILE, "besov": _BESOV, "m": 3, "N": 1024,
        "target": {"kind": "spike", "k": 7}, "seminorm_budget": 16, "n_t": 16,
        "quad_level": 4, "c_log": 10.0,
    },
}


# ------------------------------------------------------------ config handling

def _key_lines(text: str) -> dict:
    """Map dotted key paths to 1-based source lines."""
    out = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                out[path] = k.start_mark.line + 1
                walk(v, path)

    if root is not None:
        walk(root, "")
    return out


class Config:
    def __init__(self, cmd: str, data: dict, lines: dict, source: str | None):
        self.cmd = cmd
        self.data = data
        self.lines = lines
        self.source = source
        self.seed = None

    def where(self, key: str) -> str:
        ln = self.lines.get(key)
        src = self.source or "<defaults>"
        return f"{src}:{ln}" if ln else f"{src} ({key})"

    def fail(self, key: str, msg: str):
        raise ConfigError(f"{self.where(key)}: {key}: {msg}")

    def get(self, key: str):
        cur = self.data
        for part in key.split("."):
            cur = cur[part]
        return cur

    def num(self, key: str, lo=None, integer=False, allow_none=False):
        v = self.get(key)
        if v is None and allow_none:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(key, f"expected a number, got {v!r}")
        if integer and int(v) != v:
            self.fail(key, f"expected an integer, got {v!r}")
        if lo is not None and v < lo:
            self.fail(key, f"must be at least {lo}")
        return int(v) if integer else float(v)

    def hash(self) -> str:
        blob = json.dumps({"cmd": self.cmd, "config": self.data, "seed": self.seed},
                          sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _merge(base: dict, over: dict, lines: dict, source, prefix="") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        path = f"{prefix}.{k}" if prefix else k
        if k not in base:
            ln = lines.get(path)
            raise ConfigError(f"{source}:{ln}: unknown key {path!r}" if ln else f"unknown key {path!r}")
        if isinstance(base[k], dict) and k != "target":
            if not isinstance(v, dict):
                ln = lines.get(path)
                raise ConfigError(f"{source}:{ln}: {path}: expected a mapping")
            out[k] = _merge(base[k], v, lines, source, path)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(cmd: str, path: str | None, sets=()) -> Config:
    data = copy.deepcopy(DEFAULTS[cmd])
    lines = {}
    if path:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"{path}:{mark.line + 1}" if mark is not None else path
            raise ConfigError(f"{where}: invalid YAML: {getattr(exc, 'problem', exc)}") from exc
        lines = _key_lines(text)
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}:1: top level must be a mapping")
        if cmd in raw and isinstance(raw[cmd], dict) and len(raw) == 1:
            raw = raw[cmd]
            lines = {k.split(".", 1)[1]: v for k, v in lines.items() if "." in k}
        data = _merge(data, raw, lines, path)
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        parts = key.split(".")
        cur = data
        for p in parts[:-1]:
            if not isinstance(cur.get(p), dict):
                raise ConfigError(f"--set: unknown key {key!r}")
            cur = cur[p]
        if parts[-1] not in cur and parts[0] != "target":
            raise ConfigError(f"--set: unknown key {key!r}")
        cur[parts[-1]] = yaml.safe_load(val)
    return Config(cmd, data, lines, path)


def _profile(cfg: Config) -> SmoothnessProfile:
    c = cfg.get("profile.c")
    if not isinstance(c, list) or not c or not all(isinstance(v, (int, float)) for v in c):
        cfg.fail("profile.c", "expected a nonempty list of numbers")
    if not all(0 <= v <= 1 for v in c):
        cfg.fail("profile.c", "entries must lie in [0, 1]")
    try:
        return SmoothnessProfile(cfg.num("profile.s"), cfg.num("profile.beta"),
                                 cfg.num("profile.alpha"), tuple(float(v) for v in c))
    except ValueError as exc:
        cfg.fail("profile", str(exc))


def _besov(cfg: Config, d: int) -> BesovParams:
    vals = {}
    for k in ("p", "q", "r"):
        v = cfg.get(f"besov.{k}")
        if v in ("inf", ".inf") or (isinstance(v, float) and math.isinf(v)):
            vals[k] = math.inf
        else:
            vals[k] = cfg.num(f"besov.{k}", lo=1e-12)
    return BesovParams(p=vals["p"], q=vals["q"], r=vals["r"], d=d)


def _grid(cfg: Config, key: str, lo: int = 1):
    g = cfg.get(key)
    if not isinstance(g, list) or not g:
        cfg.fail(key, "expected a nonempty list")
    for v in g:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or v < lo or int(v) != v:
            cfg.fail(key, f"entries must be integers >= {lo}, got {v!r}")
    return [int(v) for v in g]


def make_target(cfg: Config, prof: SmoothnessProfile, params: BesovParams, m: int, seed: int,
                n: int | None = None):
    t = cfg.get("target")
    if not isinstance(t, dict) or "kind" not in t:
        cfg.fail("target", "expected a mapping with a 'kind'")
    kind = t["kind"]
    d = prof.d
    try:
        if kind == "spike":
            return spike_target(prof, int(t.get("k", 7)), t.get("j"), p=params.p, m=m,
                                background=t.get("background", "sincos"))
        if kind == "scaled_bspline":
            return scaled_bspline_target(prof, int(t.get("k", 4)), t.get("j"), p=params.p, m=m)
        if kind == "random_besov":
            return random_besov(float(t.get("s", prof.s)), float(t.get("p", params.p)),
                                float(t.get("q", params.q)), int(t.get("K_levels", 8)),
                                int(t.get("seed", seed)), d=d, m=m)
        if kind == "one_hot":
            k = t.get("k")
            if k is None:
                k = int(math.floor(math.log2(n) / 2 + 0.5)) if n else 4
            return one_hot_family(prof, int(k), seed, p=params.p, m=m)
        if kind == "variable":
            return variable_target(prof, int(t.get("K_levels", 6)), int(t.get("k", 6)), seed,
                                   p=params.p, q=params.q, m=m)
        if kind in ("bump", "sincos"):
            kw = {k: v for k, v in t.items() if k in ("center", "radius")}
            return closed_form(kind, d, **kw)
    except ValueError as exc:
        cfg.fail("target", str(exc))
    cfg.fail("target.kind", f"unknown target kind {kind!r}")


# ------------------------------------------------------------ output helpers

class Run:
    def __init__(self, cfg: Config, args):
        self.cfg = cfg
        self.args = args
        self.out = args.out
        self.files = []
        self.t0 = time.perf_counter()
        os.makedirs(self.out, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)

    def write_csv(self, name: str, columns, rows) -> str:
        lines = [CSV_HEADER, f"# config-hash {self.cfg.hash()}", ",".join(columns)]
        for r in rows:
            lines.append(",".join(_fmt(v) for v in r))
        self._write(name, "\n".join(lines) + "\n")
        return self.path(name)

    def write_json(self, name: str, obj) -> str:
        obj = dict(obj, config_hash=self.cfg.hash()) if isinstance(obj, dict) else obj
        self._write(name, json.dumps(obj, indent=1, sort_keys=True, default=_jsonable) + "\n")
        return self.path(name)

    def _write(self, name, text):
        with open(self.path(name), "w") as fh:
            fh.write(text)
        self.files.append(name)

    def manifest(self, status: str = "ok", extra=None) -> dict:
        man = {
            "command": self.cfg.cmd, "config": self.cfg.data, "config_hash": self.cfg.hash(),
            "config_source": self.cfg.source, "seed": self.args.seed, "threads": self.args.threads,
            "versions": {"varbesov": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "python": platform.python_version()},
            "kernel_backend": _backend(), "outputs": list(self.files),
            "wall_seconds": time.perf_counter() - self.t0, "status": status,
        }
        if extra:
            man.update(extra)
        with open(self.path("manifest.json"), "w") as fh:
            fh.write(json.dumps(man, indent=1, sort_keys=True, default=_jsonable) + "\n")
        return man


def _backend():
    from . import kernels
    return kernels.BACKEND


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "to_json"):
        return o.to_json()
    return str(o)


def _pool_map(fn, cells, threads: int):
    """Run cells concurrently; results come back in cell order."""
    if threads <= 1:
        return [fn(c) for c in cells]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, cells))


# ------------------------------------------------------------ subcommands

def cmd_approx(cfg: Config, run: Run) -> dict:
    prof = _profile(cfg)
    params = _besov(cfg, prof.d)
    m = cfg.num("m", lo=1, integer=True)
    grid = _grid(cfg, "N_grid", lo=2 ** prof.d)
    modes = cfg.get("modes")
    if not isinstance(modes, list) or not modes:
        cfg.fail("modes", "expected a nonempty list")
    r = cfg.get("error_r")
    r = params.r if r is None else (math.inf if r in ("inf", ".inf") else float(r))
    f = make_target(cfg, prof, params, m, run.args.seed)
    rows = []
    for N in grid:
        b = plan_budget(N, prof, params, m=m)
        for mode in modes:
            ap = approximate(f, prof, params, b, mode)
            rows.append((N, mode, ap.n_terms, error_report(f, ap, r=r)))
    run.write_csv("approx.csv", ["N", "mode", "terms", "error"], rows)
    return {"rows": len(rows)}


def cmd_compile(cfg: Config, run: Run) -> dict:
    prof = _profile(cfg)
    params = _besov(cfg, prof.d)
    m = cfg.num("m", lo=1, integer=True)
    N = cfg.num("N", lo=2 ** prof.d, integer=True)
    f = make_target(cfg, prof, params, m, run.args.seed)
    b = plan_budget(N, prof, params, m=m)
    ap = approximate(f, prof, params, b, cfg.get("mode"))
    trunc = cfg.get("truncate")
    if trunc is not None:
        ap = truncate_terms(ap, cfg.num("truncate", lo=1, integer=True))
    from .relunet.compiler import eps_admissible
    eps = cfg.num("eps", allow_none=True)
    n_eff = max(ap.n_terms, 16)
    if eps is None:
        eps = min(0.5, eps_admissible(n_eff, prof, params))
    net, rep = compile_approx(ap, eps, cfg.num("xi", allow_none=True), prof=prof, params=params,
                              F=cfg.num("F", allow_none=True),
                              n_audit=cfg.num("n_audit", lo=1, integer=True), N_budget=n_eff,
                              enforce_admissible=bool(cfg.get("enforce_admissible")),
                              seed=run.args.seed)
    run._write("network.json", net.dumps() + "\n")
    run.write_json("compile_report.json", rep.to_json())
    run.write_json("approximant.json", ap.to_json())
    # round trip check
    again = ReluNetwork.from_json(json.loads(open(run.path("network.json")).read()))
    pts = np.random.default_rng(run.args.seed).random((256, prof.d))
    if not np.array_equal(again.eval(pts), net.eval(pts)):
        raise AuditError("network JSON round trip changed outputs")
    return {"budgets_ok": rep.budgets_ok, "measured_error": rep.measured_error,
            "eps": eps, "stats": rep.stats.to_json()}


def _risk_cells(cfg: Config, run: Run):
    prof = _profile(cfg)
    params = _besov(cfg, prof.d)
    m = cfg.num("m", lo=1, integer=True)
    grid = _grid(cfg, "n_grid", lo=1)
    reps = cfg.num("reps", lo=1, integer=True)
    sigma = cfg.num("sigma", lo=0)
    M = cfg.num("test_points", lo=1, integer=True)
    C = cfg.num("N_const", lo=1e-12)
    F = cfg.num("F", allow_none=True)
    ests = cfg.get("estimators")
    if not isinstance(ests, list) or not set(ests) <= {"adaptive_ls", "kernel_ridge"} or not ests:
        cfg.fail("estimators", "choose from adaptive_ls, kernel_ridge")
    seed0 = run.args.seed
    cells = [(n, rep) for n in grid for rep in range(reps)]
    budgets = {}
    for n in grid:
        N = terms_for_sample_size(n, prof.s, prof.d, C)
        budgets[n] = plan_budget(N, prof, params, m=m)

    def one(cell):
        n, rep = cell
        seed = seed0 + 1000003 * rep + n
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateBudgetWarning)
            f = make_target(cfg, prof, params, m, seed0 + rep, n=n)
            S = sample_regression(f, n, sigma, seed, d=prof.d)
            out = []
            for name in ests:
                if name == "adaptive_ls":
                    est = fit_adaptive_ls(S, prof, params, budgets[n], F=F)
                else:
                    est = fit_kernel_ridge(S, seed=seed)
                risk, se = empirical_risk(est, f, M, seed + 17, d=prof.d)
                out.append((name, n, seed, risk, se, est.info["fit_seconds"]))
        return out

    rows = [r for res in _pool_map(one, cells, run.args.threads) for r in res]
    return rows


def cmd_estimate(cfg: Config, run: Run) -> dict:
    rows = _risk_cells(cfg, run)
    run.write_csv("estimate.csv", ["estimator", "n", "seed", "risk", "stderr", "fit_seconds"], rows)
    return {"rows": len(rows), **_slopes(rows)}


def cmd_compare_linear(cfg: Config, run: Run) -> dict:
    rows = _risk_cells(cfg, run)
    run.write_csv("compare_linear.csv",
                  ["estimator", "n", "seed", "risk", "stderr", "fit_seconds"], rows)
    out = {"rows": len(rows), **_slopes(rows)}
    deep = {(r[1], r[2]): r[3] for r in rows if r[0] == "adaptive_ls"}
    lin = {(r[1], r[2]): r[3] for r in rows if r[0] == "kernel_ridge"}
    by_n = {}
    for key in deep.keys() & lin.keys():
        by_n.setdefault(key[0], []).append(deep[key] < lin[key])
    out["deep_wins_fraction"] = {str(n): float(np.mean(v)) for n, v in sorted(by_n.items())}
    return out


def _slopes(rows) -> dict:
    from .rates import fit_slope
    out = {}
    for name in sorted({r[0] for r in rows}):
        ns = sorted({r[1] for r in rows if r[0] == name})
        if len(ns) < 3:
            continue
        means = [float(np.mean([r[3] for r in rows if r[0] == name and r[1] == n])) for n in ns]
        if min(means) > 0:
            out[f"slope_{name}"] = fit_slope(ns, means)[0]
    return out


def cmd_rates(cfg: Config, run: Run) -> dict:
    kw = {}
    for k in ("s", "alpha", "p", "delta", "n_min", "n_max", "s_fixed_shift"):
        v = cfg.get(k)
        kw[k] = math.inf if v in ("inf", ".inf") else cfg.num(k)
    kw["d"] = cfg.num("d", lo=1, integer=True)
    kw["points"] = cfg.num("points", lo=2, integer=True)
    kw["nu"] = cfg.num("nu", allow_none=True)
    try:
        spec = RateSpec(**kw)
    except PreconditionError as exc:
        raise ConfigError(f"{cfg.where('n_min')}: {exc}") from exc
    run.write_csv("rates.csv", ["n_or_N", "curve_kind", "value"], rate_table(spec))
    run.write_json("rates_spec.json", dict(spec.to_json(), log_base="e",
                                           note="slopes are invariant to the log base"))
    return {"curves": 4 if spec.s > spec.nu else 3, "points": spec.points}


def cmd_diagnose(cfg: Config, run: Run) -> dict:
    prof = _profile(cfg)
    params = _besov(cfg, prof.d)
    m = cfg.num("m", lo=1, integer=True)
    N = cfg.num("N", lo=2 ** prof.d, integer=True)
    lh = check_log_holder(prof, resolution=11 if prof.d > 1 else 41,
                          c_log=cfg.num("c_log", lo=1e-12))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        b = plan_budget(N, prof, params, m=m)
    f = make_target(cfg, prof, params, m, run.args.seed)
    sn = seminorm(f, prof, params, n_t=cfg.num("n_t", lo=2, integer=True),
                  budget=cfg.num("seminorm_budget", lo=1, integer=True), seed=run.args.seed,
                  quad_level=cfg.num("quad_level", lo=1, integer=True))
    report = {
        "profile": prof.to_json(), "besov": {"p": params.p, "q": params.q, "r": params.r,
                                             "delta": params.delta, "nu": params.nu},
        "s_min": prof.s_min, "s_max": prof.s_max,
        "degree_condition": prof.s_max < min(m, m - 1 + 1 / params.p),
        "log_holder": {"passed": lh.passed, "worst_value": lh.worst_value,
                       "c_log": cfg.get("c_log")},
        "budget": b.to_json(), "warnings": [str(w.message) for w in caught],
        "target": {"tag": f.tag, "sup_norm": f.sup_norm},
        "variable_seminorm": sn.value,
    }
    run.write_json("diagnose.json", report)
    return {"log_holder": lh.passed, "degree_condition": report["degree_condition"],
            "degenerate": b.degenerate, "variable_seminorm": sn.value}


COMMANDS = {
    "approx": cmd_approx, "compile": cmd_compile, "estimate": cmd_estimate,
    "compare-linear": cmd_compare_linear, "rates": cmd_rates, "diagnose": cmd_diagnose,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="varbesov", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"varbesov {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--seed", type=int, default=0, metavar="U64")
        sp.add_argument("--out", default=f"varbesov-{name}", metavar="DIR")
        sp.add_argument("--threads", type=int, default=1, metavar="N")
        sp.add_argument("--json", action="store_true", help="print a JSON summary on stdout")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry (dotted path, YAML value)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed < 0 or args.seed >= 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return ConfigError.exit_code
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return ConfigError.exit_code
    run = None
    try:
        cfg = load_config(args.command, args.config, args.set)
        cfg.seed = args.seed
        run = Run(cfg, args)
        summary = COMMANDS[args.command](cfg, run)
        run.manifest("ok", {"summary": summary})
    except VarbesovError as exc:
        if run is not None:
            extra = {"error": str(exc)}
            if isinstance(exc, AuditError) and exc.worst_point is not None:
                extra["worst_point"] = np.asarray(exc.worst_point).tolist()
            run.manifest(type(exc).__name__, extra)
        if args.json:
            print(json.dumps({"status": "error", "kind": type(exc).__name__, "message": str(exc)}))
        else:
            print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    out = {"status": "ok", "command": args.command, "out": args.out,
           "config_hash": cfg.hash(), **summary}
    if args.json:
        print(json.dumps(out, sort_keys=True, default=_jsonable))
    else:
        for k, v in out.items():
            print(f"{k}: {v}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
