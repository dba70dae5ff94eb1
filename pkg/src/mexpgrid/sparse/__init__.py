"""Compressed sparse matrices, sparse LU and triangular solves."""

from .kernels import BACKEND
from .lu import LuFactors, SingularMatrixError, lu_solve, sparse_lu, warmup
from .matrix import (SparseError, SparseMatrix, block, combine, read_matrix_market, spmv, spmv_t,
                     write_matrix_market)
from .ordering import minimum_degree

__all__ = [
    "BACKEND", "LuFactors", "SingularMatrixError", "SparseError", "SparseMatrix", "block", "combine",
    "lu_solve", "minimum_degree", "read_matrix_market", "sparse_lu", "spmv", "spmv_t", "warmup", "write_matrix_market",
]
