# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled basis kernels.  Same signatures as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


cdef inline void _triangle(int m, double t, double* out) noexcept nogil:
    # out[r] = N(t + m - r), r = 0..m; scratch lives in out itself
    cdef double b[32]
    cdef double nb[32]
    cdef int p, r
    b[0] = 1.0
    for p in range(1, m + 1):
        for r in range(p + 1):
            nb[r] = 0.0
            if r <= p - 1:
                nb[r] += (t + r) * b[r]
            if r >= 1:
                nb[r] += (p + 1 - t - r) * b[r - 1]
            nb[r] /= p
        for r in range(p + 1):
            b[r] = nb[r]
    for r in range(m + 1):
        out[r] = b[m - r]


def local_basis(int m, y):
    if m > 30:
        raise ValueError("degree too large for compiled kernel")
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = yv.shape[0], i
    first = np.empty(n, dtype=np.int64)
    vals = np.empty((n, m + 1), dtype=np.float64)
    cdef long long[::1] fv = first
    cdef double[:, ::1] vv = vals
    cdef double fl
    with nogil:
        for i in range(n):
            fl = floor(yv[i])
            fv[i] = <long long>fl - m
            _triangle(m, yv[i] - fl, &vv[i, 0])
    return first, vals


cdef inline bint _point_terms(int m, int d, const double* y, const long long* off,
                              const long long* shape, const long long* strides,
                              long long* firsts, double* vals) noexcept nogil:
    cdef int a
    cdef double fl
    for a in range(d):
        fl = floor(y[a])
        firsts[a] = <long long>fl - m - off[a]
        _triangle(m, y[a] - fl, &vals[a * (m + 1)])
    return True


def tensor_eval(int m, ys, offsets, coef):
    if m > 30:
        raise ValueError("degree too large for compiled kernel")
    cdef double[:, ::1] yv = np.ascontiguousarray(ys, dtype=np.float64)
    cdef Py_ssize_t n = yv.shape[0]
    cdef int d = yv.shape[1]
    cdef double[::1] flat = np.ascontiguousarray(coef, dtype=np.float64).reshape(-1)
    cdef long long[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef long long[::1] shp = np.ascontiguousarray(coef.shape, dtype=np.int64)
    st = np.ones(d, dtype=np.int64)
    for a in range(d - 2, -1, -1):
        st[a] = st[a + 1] * coef.shape[a + 1]
    cdef long long[::1] strides = st
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef long long[::1] firsts = np.empty(d, dtype=np.int64)
    cdef double[::1] vals = np.empty(d * (m + 1), dtype=np.float64)
    cdef long long[::1] cnt = np.zeros(d, dtype=np.int64)
    cdef Py_ssize_t i
    cdef int ax, total, c, q
    cdef long long pos, idx
    cdef double w, acc
    cdef bint ok
    total = (m + 1) ** d
    with nogil:
        for i in range(n):
            _point_terms(m, d, &yv[i, 0], &off[0], &shp[0], &strides[0],
                         &firsts[0], &vals[0])
            acc = 0.0
            for c in range(total):
                q = c
                w = 1.0
                idx = 0
                ok = True
                for ax in range(d - 1, -1, -1):
                    pos = firsts[ax] + (q % (m + 1))
                    if pos < 0 or pos >= shp[ax]:
                        ok = False
                        break
                    w *= vals[ax * (m + 1) + (q % (m + 1))]
                    idx += pos * strides[ax]
                    q = q // (m + 1)
                if ok:
                    acc += w * flat[idx]
            ov[i] = acc
    return out


def tensor_rows(int m, ys, offsets, shape):
    if m > 30:
        raise ValueError("degree too large for compiled kernel")
    cdef double[:, ::1] yv = np.ascontiguousarray(ys, dtype=np.float64)
    cdef Py_ssize_t n = yv.shape[0]
    cdef int d = yv.shape[1]
    cdef long long[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef long long[::1] shp = np.ascontiguousarray(shape, dtype=np.int64)
    st = np.ones(d, dtype=np.int64)
    for a in range(d - 2, -1, -1):
        st[a] = st[a + 1] * shape[a + 1]
    cdef long long[::1] strides = st
    cdef int total = (m + 1) ** d
    rows = np.empty(n * total, dtype=np.int64)
    cols = np.empty(n * total, dtype=np.int64)
    data = np.empty(n * total, dtype=np.float64)
    cdef long long[::1] rv = rows
    cdef long long[::1] cv = cols
    cdef double[::1] dv = data
    cdef long long[::1] firsts = np.empty(d, dtype=np.int64)
    cdef double[::1] vals = np.empty(d * (m + 1), dtype=np.float64)
    cdef Py_ssize_t i, k = 0
    cdef int ax, c, q
    cdef long long pos, idx
    cdef double w
    cdef bint ok
    with nogil:
        for i in range(n):
            _point_terms(m, d, &yv[i, 0], &off[0], &shp[0], &strides[0],
                         &firsts[0], &vals[0])
            for c in range(total):
                q = c
                w = 1.0
                idx = 0
                ok = True
                for ax in range(d - 1, -1, -1):
                    pos = firsts[ax] + (q % (m + 1))
                    if pos < 0 or pos >= shp[ax]:
                        ok = False
                        break
                    w *= vals[ax * (m + 1) + (q % (m + 1))]
                    idx += pos * strides[ax]
                    q = q // (m + 1)
                if ok:
                    rv[k] = i
                    cv[k] = idx
                    dv[k] = w
                    k += 1
    return rows[:k].copy(), cols[:k].copy(), data[:k].copy()
