# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled CSR kernels. Loop order matches the numpy fallback in ``_csr_py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def spmm(const long[::1] indptr, const long[::1] indices, const double[::1] data,
         const double[:, ::1] x, Py_ssize_t n_rows):
    cdef Py_ssize_t n_cols = x.shape[1]
    out = np.zeros((n_rows, n_cols), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t r, p, c, j
    cdef double a
    for r in range(n_rows):
        for p in range(indptr[r], indptr[r + 1]):
            j = indices[p]
            a = data[p]
            for c in range(n_cols):
                o[r, c] += a * x[j, c]
    return out


def spmm_adjoint(const long[::1] indptr, const long[::1] indices, const double[::1] data,
                 const double[:, ::1] g, Py_ssize_t n_cols_a):
    cdef Py_ssize_t n_rows = g.shape[0]
    cdef Py_ssize_t width = g.shape[1]
    out = np.zeros((n_cols_a, width), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t r, p, c, j
    cdef double a
    for r in range(n_rows):
        for p in range(indptr[r], indptr[r + 1]):
            j = indices[p]
            a = data[p]
            for c in range(width):
                o[j, c] += a * g[r, c]
    return out
