from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..constants import PIVOT_THRESHOLD
from . import kernels
from .matrix import SparseError, SparseMatrix
from .ordering import minimum_degree


class SingularMatrixError(SparseError):
    """Raised when no acceptable pivot exists; ``column`` is the original column index."""

    def __init__(self, column, step):
        self.column = int(column)
        self.step = int(step)
        super().__init__(f"matrix is singular: no nonzero pivot for column {self.column} (elimination step {self.step})")


@dataclass(frozen=True, eq=False)
class LuFactors:
    """P·A·Q = L·U with unit-diagonal L.

    ``pinv[i]`` is the position of original row ``i`` after pivoting, ``q[k]``
    the original column eliminated at step ``k``.
    """

    L: SparseMatrix
    U: SparseMatrix
    pinv: np.ndarray
    q: np.ndarray

    @property
    def n(self):
        return self.L.nrows

    def row_perm(self):
        p = np.empty_like(self.pinv)
        p[self.pinv] = np.arange(self.pinv.size)
        return p

    def solve(self, b):
        return lu_solve(self, b)


def _sorted(n, colptr, rowind, values):
    cols = np.repeat(np.arange(n, dtype=np.int64), np.diff(colptr))
    order = np.lexsort((rowind, cols))
    return SparseMatrix(n, n, np.asarray(colptr, dtype=np.int64).copy(), rowind[order].copy(), values[order].copy())


def sparse_lu(A, tol=PIVOT_THRESHOLD, order=None):
    """Factorize a square SparseMatrix with a minimum-degree column order."""
    if A.nrows != A.ncols:
        raise SparseError(f"LU needs a square matrix, got {A.shape}")
    n = A.ncols
    q = minimum_degree(A) if order is None else np.asarray(order, dtype=np.int64)
    Lp, Li, Lx, Up, Ui, Ux, pinv, bad = kernels.lu_factor(n, A.colptr, A.rowind, A.values, q, float(tol))
    if bad >= 0:
        raise SingularMatrixError(q[bad], bad)
    return LuFactors(_sorted(n, Lp, Li, Lx), _sorted(n, Up, Ui, Ux), np.asarray(pinv), q)


def lu_solve(f, b):
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 1 or b.shape[0] != f.n:
        raise SparseError(f"dimension mismatch: factors of order {f.n}, vector {b.shape}")
    x = np.empty(f.n)
    x[f.pinv] = b
    kernels.lsolve_unit(f.L.colptr, f.L.rowind, f.L.values, x)
    kernels.usolve(f.U.colptr, f.U.rowind, f.U.values, x)
    out = np.empty(f.n)
    out[f.q] = x
    return out


def warmup():
    """Factor and solve a 2x2 system so compiled kernels are loaded before anything is timed."""
    A = SparseMatrix.from_dense(np.array([[2.0, 1.0], [1.0, 3.0]]))
    x = lu_solve(sparse_lu(A), A.matvec(np.ones(2)))
    return bool(np.allclose(x, 1.0))
