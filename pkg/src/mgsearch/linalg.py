"""Sparse/dense numerical kernels with hand-written adjoints.

Dense matrices are plain 2-D ``float64`` numpy arrays. Sparse matrices are
immutable CSR containers (:class:`SparseMatrix`). The CSR products dispatch
to the compiled extension ``mgsearch._csr`` when it imports, otherwise to
the numpy fallback in ``mgsearch._csr_py``. Set ``MGSEARCH_PURE_PYTHON=1``
to force the fallback.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass

import numpy as np

from . import _csr_py
from .errors import ShapeError

_ext = None
if not os.environ.get("MGSEARCH_PURE_PYTHON"):
    try:
        from . import _csr as _ext
    except ImportError:  # pragma: no cover - depends on build
        _ext = None

BACKEND = "compiled" if _ext is not None else "python"


class CallCounter:
    """Counts kernel invocations. One instance per process."""

    def __init__(self):
        self._lock = threading.Lock()
        self.spmm = 0
        self.adjoint = 0

    def reset(self):
        with self._lock:
            self.spmm = 0
            self.adjoint = 0

    def snapshot(self):
        return self.spmm, self.adjoint

    def _bump(self, name):
        with self._lock:
            setattr(self, name, getattr(self, name) + 1)


counter = CallCounter()


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """CSR matrix. Construct through :meth:`from_coo` or :meth:`from_dense`."""

    n_rows: int
    n_cols: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        for arr in (self.indptr, self.indices, self.data):
            arr.setflags(write=False)

    @classmethod
    def from_coo(cls, rows, cols, vals, shape):
        """Build from triplets. Duplicates are summed, zeros dropped."""
        n_rows, n_cols = shape
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (len(rows) == len(cols) == len(vals)):
            raise ShapeError("row, col and value arrays differ in length")
        if len(rows) and (rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols):
            raise ShapeError("coordinate out of range for shape %r" % (shape,))
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if len(rows):
            new = np.ones(len(rows), dtype=bool)
            new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            starts = np.flatnonzero(new)
            vals = np.add.reduceat(vals, starts)
            rows, cols = rows[starts], cols[starts]
        keep = vals != 0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_rows), out=indptr[1:])
        return cls(n_rows, n_cols, indptr, np.ascontiguousarray(cols), np.ascontiguousarray(vals))

    @classmethod
    def from_dense(cls, a):
        a = np.asarray(a, dtype=np.float64)
        r, c = np.nonzero(a)
        return cls.from_coo(r, c, a[r, c], a.shape)

    @classmethod
    def identity(cls, n):
        idx = np.arange(n)
        return cls.from_coo(idx, idx, np.ones(n), (n, n))

    @property
    def shape(self):
        return self.n_rows, self.n_cols

    @property
    def nnz(self):
        return len(self.data)

    def row_ids(self):
        return np.repeat(np.arange(self.n_rows), np.diff(self.indptr))

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.row_ids(), self.indices] = self.data
        return out

    def nonzero_rows(self):
        return np.flatnonzero(np.diff(self.indptr))

    def nonzero_cols(self):
        return np.unique(self.indices)


def spmm(a: SparseMatrix, x: np.ndarray, backend: str | None = None) -> np.ndarray:
    """Return ``a @ x`` and count one propagation."""
    if a.n_cols != x.shape[0]:
        raise ShapeError(f"spmm: A is {a.shape}, X is {x.shape}")
    x = np.ascontiguousarray(x, dtype=np.float64)
    counter._bump("spmm")
    return _kernels(backend).spmm(a.indptr, a.indices, a.data, x, a.n_rows)


def spmm_adjoint(a: SparseMatrix, g: np.ndarray, backend: str | None = None) -> np.ndarray:
    """Return ``a.T @ g``."""
    if a.n_rows != g.shape[0]:
        raise ShapeError(f"spmm_adjoint: A is {a.shape}, G is {g.shape}")
    g = np.ascontiguousarray(g, dtype=np.float64)
    counter._bump("adjoint")
    return _kernels(backend).spmm_adjoint(a.indptr, a.indices, a.data, g, a.n_cols)


def _kernels(backend):
    if backend is None:
        return _ext if _ext is not None else _csr_py
    if backend == "python":
        return _csr_py
    if backend == "compiled":
        if _ext is None:
            raise RuntimeError("compiled CSR extension is not built")
        return _ext
    raise ValueError(f"unknown backend {backend!r}")


def row_normalize(a: SparseMatrix) -> SparseMatrix:
    """D^-1 A. Zero rows stay zero."""
    if a.nnz and a.data.min() < 0:
        raise ValueError("row_normalize expects nonnegative entries")
    counts = np.diff(a.indptr)
    sums = np.bincount(a.row_ids(), weights=a.data, minlength=a.n_rows)
    sums = np.where(counts > 0, sums, 1.0)
    data = a.data / np.repeat(sums, counts)
    return SparseMatrix(a.n_rows, a.n_cols, a.indptr.copy(), a.indices.copy(), data)


# dense kernels

def _check_2d(*ms):
    for m in ms:
        if np.ndim(m) != 2:
            raise ShapeError(f"expected a 2-D matrix, got shape {np.shape(m)}")


def matmul(a, b):
    _check_2d(a, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} x {b.shape}")
    return a @ b


def add(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} vs {b.shape}")
    return a + b


def scale(a, c):
    return a * float(c)


def transpose(a):
    _check_2d(a)
    return np.ascontiguousarray(a.T)


def relu(x):
    return np.maximum(x, 0.0)


def relu_grad(x, g):
    """Backward of relu: pass ``g`` where ``x > 0``."""
    if x.shape != g.shape:
        raise ShapeError(f"relu_grad: {x.shape} vs {g.shape}")
    return np.where(x > 0, g, 0.0)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return -np.logaddexp(0.0, -x)


def row_softmax(x):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    z = np.exp(x - x.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def log_row_softmax(x):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    s = x - x.max(axis=1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=1, keepdims=True))
