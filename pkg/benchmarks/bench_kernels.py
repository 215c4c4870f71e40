"""Time the compiled basis kernels against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat 5] [--json]
"""

import argparse
import json
import timeit

import numpy as np

from varbesov import _kernels_py as py

try:
    from varbesov import _kernels as cy
except ImportError:  # extension not built
    cy = None

CASES = [
    ("local_basis", 1, 3, 200_000),
    ("tensor_eval", 1, 3, 200_000),
    ("tensor_eval", 2, 2, 100_000),
    ("tensor_eval", 3, 2, 20_000),
    ("tensor_rows", 2, 3, 50_000),
    ("tensor_rows", 3, 2, 20_000),
]


def _call(impl, name, m, ys, offsets, coef):
    if name == "local_basis":
        return impl.local_basis(m, ys[:, 0])
    if name == "tensor_eval":
        return impl.tensor_eval(m, ys, offsets, coef)
    return impl.tensor_rows(m, ys, offsets, coef.shape)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    rows = []
    for name, d, m, n in CASES:
        k = 6 if d < 3 else 4
        shape = (2 ** k + m,) * d
        coef = rng.standard_normal(shape)
        ys = rng.uniform(0, 2 ** k, (n, d))
        offsets = np.full(d, -m, dtype=np.int64)
        row = {"kernel": name, "d": d, "m": m, "points": n}
        for label, impl in (("python", py), ("cython", cy)):
            if impl is None:
                continue
            t = min(timeit.repeat(lambda: _call(impl, name, m, ys, offsets, coef),
                                  number=1, repeat=args.repeat))
            row[f"{label}_s"] = t
        if "cython_s" in row:
            row["speedup"] = row["python_s"] / row["cython_s"]
        rows.append(row)
    if args.json:
        print(json.dumps(rows, indent=1))
        return
    print(f"{'kernel':<12}{'d':>3}{'m':>3}{'points':>9}{'python s':>11}{'cython s':>11}{'speedup':>9}")
    for r in rows:
        print(f"{r['kernel']:<12}{r['d']:>3}{r['m']:>3}{r['points']:>9}{r['python_s']:>11.4f}"
              f"{r.get('cython_s', float('nan')):>11.4f}{r.get('speedup', float('nan')):>9.1f}")


if __name__ == "__main__":
    main()
