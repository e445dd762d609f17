"""Pure numpy CSR kernels, used when the compiled extension is unavailable."""

import numpy as np


def _row_ids(indptr):
    return np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))


def spmm(indptr, indices, data, x, n_rows):
    out = np.zeros((n_rows, x.shape[1]), dtype=np.float64)
    if len(data):
        # np.add.at accumulates in stored order, same as the compiled loop
        np.add.at(out, _row_ids(indptr), data[:, None] * x[indices])
    return out


def spmm_adjoint(indptr, indices, data, g, n_cols_a):
    out = np.zeros((n_cols_a, g.shape[1]), dtype=np.float64)
    if len(data):
        np.add.at(out, indices, data[:, None] * g[_row_ids(indptr)])
    return out
