# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: periodized filter-bank passes and surface distances.

Mirrors ``waveseg.backend.pure`` exactly; the wavelet and metric tests run
against both backends.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

NAME = "native"


def dwt_axis(x, lo, hi):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] lov = np.ascontiguousarray(lo, dtype=np.float64)
    cdef double[::1] hiv = np.ascontiguousarray(hi, dtype=np.float64)
    cdef Py_ssize_t rows = xv.shape[0], n = xv.shape[1]
    cdef Py_ssize_t half = n // 2, taps = lov.shape[0]
    cdef cnp.ndarray a_arr = np.zeros((rows, half), dtype=np.float64)
    cdef cnp.ndarray d_arr = np.zeros((rows, half), dtype=np.float64)
    cdef double[:, ::1] a = a_arr
    cdef double[:, ::1] d = d_arr
    cdef Py_ssize_t r, k, m, j
    cdef double sa, sd, v
    with nogil:
        for r in range(rows):
            for k in range(half):
                sa = 0.0
                sd = 0.0
                for m in range(taps):
                    j = 2 * k + m
                    if j >= n:
                        j -= n
                    v = xv[r, j]
                    sa += lov[m] * v
                    sd += hiv[m] * v
                a[r, k] = sa
                d[r, k] = sd
    return a_arr, d_arr


def idwt_axis(a, d, lo, hi):
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef double[::1] lov = np.ascontiguousarray(lo, dtype=np.float64)
    cdef double[::1] hiv = np.ascontiguousarray(hi, dtype=np.float64)
    cdef Py_ssize_t rows = av.shape[0], half = av.shape[1]
    cdef Py_ssize_t n = 2 * half, taps = lov.shape[0]
    cdef cnp.ndarray x_arr = np.zeros((rows, n), dtype=np.float64)
    cdef double[:, ::1] x = x_arr
    cdef Py_ssize_t r, k, m, j
    with nogil:
        for r in range(rows):
            for k in range(half):
                for m in range(taps):
                    j = 2 * k + m
                    if j >= n:
                        j -= n
                    x[r, j] += lov[m] * av[r, k] + hiv[m] * dv[r, k]
    return x_arr


def nn_distances(src, dst, spacing):
    cdef double[:, ::1] s = np.ascontiguousarray(src, dtype=np.float64)
    cdef double[:, ::1] t = np.ascontiguousarray(dst, dtype=np.float64)
    cdef double[::1] sp = np.ascontiguousarray(spacing, dtype=np.float64)
    cdef Py_ssize_t ns = s.shape[0], nt = t.shape[0], rank = s.shape[1]
    cdef cnp.ndarray out_arr = np.empty(ns, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double best, acc, diff
    with nogil:
        for i in range(ns):
            best = -1.0
            for j in range(nt):
                acc = 0.0
                for k in range(rank):
                    diff = (s[i, k] - t[j, k]) * sp[k]
                    acc += diff * diff
                if best < 0.0 or acc < best:
                    best = acc
            out[i] = sqrt(best)
    return out_arr
