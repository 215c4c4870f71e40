"""Pure NumPy implementations of the basis kernels.

Mirrors the compiled ``_kernels`` extension function for function; used when
the extension is unavailable or ``VARBESOV_PURE_PYTHON`` is set.
"""

import numpy as np


def local_basis(m, y):
    """Nonzero cardinal B-spline values at scaled coordinates ``y``.

    Returns ``(first, vals)`` where ``vals[i, r] = N(y[i] - first[i] - r)``
    for ``r = 0..m`` and ``first[i] = floor(y[i]) - m``.
    """
    y = np.ascontiguousarray(y, dtype=np.float64)
    fl = np.floor(y)
    t = y - fl
    n = y.shape[0]
    # b[:, r] holds N_p(t + r); built by the cardinal Cox-de Boor recursion.
    b = np.zeros((n, m + 1))
    b[:, 0] = 1.0
    for p in range(1, m + 1):
        new = np.zeros((n, m + 1))
        for r in range(p + 1):
            acc = np.zeros(n)
            if r <= p - 1:
                acc += (t + r) * b[:, r]
            if r >= 1:
                acc += (p + 1 - t - r) * b[:, r - 1]
            new[:, r] = acc / p
        b = new
    # value for shift j = first + r is N(y - j) = N(t + m - r)
    vals = b[:, ::-1].copy()
    first = fl.astype(np.int64) - m
    return first, vals


def tensor_eval(m, ys, offsets, coef):
    """Evaluate a dense tensor coefficient box at scaled points.

    ``ys`` is (n, d) scaled coordinates, ``offsets`` the smallest shift per
    axis stored in ``coef`` (shape (n_1, ..., n_d)).  Shifts outside the box
    contribute nothing.
    """
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    n, d = ys.shape
    shape = coef.shape
    firsts = []
    valss = []
    for a in range(d):
        f, v = local_basis(m, ys[:, a])
        firsts.append(f - offsets[a])
        valss.append(v)
    out = np.zeros(n)
    flat = coef.reshape(-1)
    strides = np.ones(d, dtype=np.int64)
    for a in range(d - 2, -1, -1):
        strides[a] = strides[a + 1] * shape[a + 1]
    for combo in np.ndindex(*([m + 1] * d)):
        w = np.ones(n)
        idx = np.zeros(n, dtype=np.int64)
        ok = np.ones(n, dtype=bool)
        for a, r in enumerate(combo):
            pos = firsts[a] + r
            ok &= (pos >= 0) & (pos < shape[a])
            idx += np.clip(pos, 0, shape[a] - 1) * strides[a]
            w *= valss[a][:, r]
        out += np.where(ok, w * flat[idx], 0.0)
    return out


def tensor_rows(m, ys, offsets, shape):
    """COO triplets of the tensor design matrix at scaled points.

    Row ``i`` holds the (m+1)^d nonzero products for point ``i``; columns are
    row-major flat indices into a box of ``shape`` starting at ``offsets``.
    Entries falling outside the box are dropped.
    """
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    n, d = ys.shape
    firsts = []
    valss = []
    for a in range(d):
        f, v = local_basis(m, ys[:, a])
        firsts.append(f - offsets[a])
        valss.append(v)
    strides = np.ones(d, dtype=np.int64)
    for a in range(d - 2, -1, -1):
        strides[a] = strides[a + 1] * shape[a + 1]
    rows, cols, data = [], [], []
    ridx = np.arange(n, dtype=np.int64)
    for combo in np.ndindex(*([m + 1] * d)):
        w = np.ones(n)
        idx = np.zeros(n, dtype=np.int64)
        ok = np.ones(n, dtype=bool)
        for a, r in enumerate(combo):
            pos = firsts[a] + r
            ok &= (pos >= 0) & (pos < shape[a])
            idx += pos * strides[a]
            w *= valss[a][:, r]
        rows.append(ridx[ok])
        cols.append(idx[ok])
        data.append(w[ok])
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(data)
