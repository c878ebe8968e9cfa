# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the ragged kernels in ``_kernels_py``."""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def segment_max(const double[:, ::1] scores, const long long[::1] tokens, const long long[::1] ptr):
    cdef Py_ssize_t n_rows = scores.shape[0]
    cdef Py_ssize_t n_groups = ptr.shape[0] - 1
    out_arr = np.empty((n_rows, n_groups), dtype=np.float64)
    arg_arr = np.empty((n_rows, n_groups), dtype=np.int64)
    cdef double[:, ::1] out = out_arr
    cdef long long[:, ::1] arg = arg_arr
    cdef Py_ssize_t n, g, p
    cdef long long tok, best_tok
    cdef double best, v
    with nogil:
        for n in range(n_rows):
            for g in range(n_groups):
                best_tok = tokens[ptr[g]]
                best = scores[n, best_tok]
                for p in range(ptr[g] + 1, ptr[g + 1]):
                    tok = tokens[p]
                    v = scores[n, tok]
                    if v > best:
                        best = v
                        best_tok = tok
                out[n, g] = best
                arg[n, g] = best_tok
    return out_arr, arg_arr


def segment_max_backward(const double[:, ::1] dout, const long long[:, ::1] arg, Py_ssize_t n_cols):
    cdef Py_ssize_t n_rows = dout.shape[0]
    cdef Py_ssize_t n_groups = dout.shape[1]
    grad_arr = np.zeros((n_rows, n_cols), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr
    cdef Py_ssize_t n, g
    with nogil:
        for n in range(n_rows):
            for g in range(n_groups):
                grad[n, arg[n, g]] += dout[n, g]
    return grad_arr


def scatter_add_rows(double[:, ::1] target, const long long[::1] idx, const double[:, ::1] values):
    cdef Py_ssize_t m, j
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t d = target.shape[1]
    cdef long long r
    with nogil:
        for m in range(n):
            r = idx[m]
            for j in range(d):
                target[r, j] += values[m, j]
