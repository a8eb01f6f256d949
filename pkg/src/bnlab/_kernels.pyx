# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; must match ``_kernels_py`` bit for bit."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from libc.stdint cimport uint64_t

cnp.import_array()

cdef enum:
    OTHER = 0
    A_1_REST = 1
    B_REST_1 = 2
    C3_1_1_REST = 3
    D3_REST_1_1 = 4
    C2_2_REST = 5
    D2_REST_2 = 6


cdef inline void _snap_row(double[::1] v, Py_ssize_t n, double tol) noexcept nogil:
    cdef Py_ssize_t j
    cdef double mx = v[0], limit
    if tol <= 0 or n < 2:
        return
    for j in range(1, n):
        if v[j] > mx:
            mx = v[j]
    limit = tol * mx
    for j in range(1, n):
        if v[j] != v[j - 1] and fabs(v[j] - v[j - 1]) <= limit:
            v[j] = v[j - 1]


def tree_children(rows, double tol):
    cdef double[:, ::1] r = np.ascontiguousarray(rows, dtype=np.float64)
    cdef Py_ssize_t m = r.shape[0], n = r.shape[1], i, j
    out_arr = np.empty((2 * m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double s, mean, v
    with nogil:
        for i in range(m):
            s = 0.0
            for j in range(n):
                s = s + r[i, j]
            mean = s / n
            for j in range(n):
                v = r[i, j] - mean
                out[2 * i, j] = v if v > 0 else 0.0
                v = mean - r[i, j]
                out[2 * i + 1, j] = v if v > 0 else 0.0
            _snap_row(out[2 * i], n, tol)
            _snap_row(out[2 * i + 1], n, tol)
    return out_arr


def cluster_counts(rows):
    cdef double[:, ::1] r = np.ascontiguousarray(rows, dtype=np.float64)
    cdef Py_ssize_t m = r.shape[0], n = r.shape[1], i, j
    out_arr = np.empty(m, dtype=np.int64)
    cdef long long[::1] out = out_arr
    cdef long long c
    with nogil:
        for i in range(m):
            c = 1
            for j in range(1, n):
                if r[i, j] != r[i, j - 1]:
                    c += 1
            out[i] = c
    return out_arr


def composition_codes(rows):
    cdef double[:, ::1] r = np.ascontiguousarray(rows, dtype=np.float64)
    cdef Py_ssize_t m = r.shape[0], n = r.shape[1], i, j
    out_arr = np.zeros(m, dtype=np.int8)
    cdef signed char[::1] out = out_arr
    cdef Py_ssize_t c, b0, b1
    if n < 2:
        return out_arr
    with nogil:
        for i in range(m):
            c = 1
            b0 = -1
            b1 = -1
            for j in range(1, n):
                if r[i, j] != r[i, j - 1]:
                    c += 1
                    if b0 < 0:
                        b0 = j - 1
                    elif b1 < 0:
                        b1 = j - 1
            if c == 2:
                if b0 == 0:
                    out[i] = A_1_REST
                elif b0 == n - 2:
                    out[i] = B_REST_1
                elif b0 == 1:
                    out[i] = C2_2_REST
                elif b0 == n - 3:
                    out[i] = D2_REST_2
            elif c == 3:
                if b0 == 0 and b1 == 1:
                    out[i] = C3_1_1_REST
                elif b0 == n - 3 and b1 == n - 2:
                    out[i] = D3_REST_1_1
    return out_arr


def sign_masks(proj):
    cdef double[:, ::1] p = np.ascontiguousarray(proj, dtype=np.float64)
    cdef Py_ssize_t m = p.shape[0], n = p.shape[1], i, j
    cdef Py_ssize_t words = (n + 63) // 64 if n > 0 else 1
    keys_arr = np.zeros((m, words), dtype=np.uint64)
    valid_arr = np.ones(m, dtype=bool)
    cdef uint64_t[:, ::1] keys = keys_arr
    cdef cnp.npy_bool[::1] valid = valid_arr
    cdef uint64_t word
    cdef Py_ssize_t w, lo, hi
    cdef int zero
    with nogil:
        for i in range(m):
            # branch-free: random signs would defeat the branch predictor
            zero = 0
            for w in range(words):
                lo = w * 64
                hi = min(n, lo + 64)
                word = 0
                for j in range(lo, hi):
                    word |= (<uint64_t>(p[i, j] > 0)) << (j - lo)
                    zero |= p[i, j] == 0
                keys[i, w] = word
            valid[i] = not zero
    return keys_arr, valid_arr
