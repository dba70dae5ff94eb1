from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels


class SparseError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Compressed-column matrix.

    Row indices are sorted and unique inside every column.  Instances are
    treated as immutable; the arrays are flagged read-only on construction.
    """

    nrows: int
    ncols: int
    colptr: np.ndarray
    rowind: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        for a in (self.colptr, self.rowind, self.values):
            a.setflags(write=False)

    # -- construction -------------------------------------------------------

    @classmethod
    def from_triplets(cls, nrows, ncols, rows, cols, vals, drop_zeros=True):
        """Assemble from (row, col, value) triplets; duplicates are summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (rows.shape == cols.shape == vals.shape):
            raise SparseError("triplet arrays differ in length")
        if rows.size and (rows.min() < 0 or rows.max() >= nrows or cols.min() < 0 or cols.max() >= ncols):
            raise SparseError("triplet index out of range")
        order = np.lexsort((rows, cols))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            key = cols * nrows + rows
            start = np.concatenate(([True], key[1:] != key[:-1]))
            idx = np.flatnonzero(start)
            vals = np.add.reduceat(vals, idx)
            rows, cols = rows[idx], cols[idx]
        if drop_zeros:
            keep = vals != 0.0
            rows, cols, vals = rows[keep], cols[keep], vals[keep]
        colptr = np.zeros(ncols + 1, dtype=np.int64)
        np.add.at(colptr, cols + 1, 1)
        np.cumsum(colptr, out=colptr)
        return cls(int(nrows), int(ncols), colptr, rows.copy(), vals.copy())

    @classmethod
    def from_dense(cls, a):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2:
            raise SparseError("expected a 2-D array")
        r, c = np.nonzero(a)
        return cls.from_triplets(a.shape[0], a.shape[1], r, c, a[r, c])

    @classmethod
    def identity(cls, n):
        i = np.arange(n)
        return cls.from_triplets(n, n, i, i, np.ones(n))

    @classmethod
    def zeros(cls, nrows, ncols):
        return cls.from_triplets(nrows, ncols, [], [], [])

    @classmethod
    def diag(cls, d):
        d = np.asarray(d, dtype=np.float64)
        i = np.arange(d.size)
        return cls.from_triplets(d.size, d.size, i, i, d)

    # -- views ----------------------------------------------------------------

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    @property
    def nnz(self):
        return int(self.colptr[-1])

    def col_indices(self):
        return np.repeat(np.arange(self.ncols, dtype=np.int64), np.diff(self.colptr))

    def triplets(self):
        return self.rowind.copy(), self.col_indices(), self.values.copy()

    def to_dense(self):
        a = np.zeros(self.shape)
        a[self.rowind, self.col_indices()] = self.values
        return a

    def transpose(self):
        r, c, v = self.triplets()
        return SparseMatrix.from_triplets(self.ncols, self.nrows, c, r, v, drop_zeros=False)

    T = property(transpose)

    def diagonal(self):
        d = np.zeros(min(self.shape))
        c = self.col_indices()
        on = self.rowind == c
        d[c[on]] = self.values[on]
        return d

    # -- algebra --------------------------------------------------------------

    def matvec(self, x):
        return spmv(self, x)

    def __matmul__(self, x):
        return spmv(self, x)

    def scaled(self, a):
        return SparseMatrix(self.nrows, self.ncols, self.colptr.copy(), self.rowind.copy(), self.values * float(a))

    def submatrix(self, rows, cols):
        """Dense-index selection A[rows][:, cols] kept sparse."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        rmap = -np.ones(self.nrows, dtype=np.int64)
        rmap[rows] = np.arange(rows.size)
        cmap = -np.ones(self.ncols, dtype=np.int64)
        cmap[cols] = np.arange(cols.size)
        r, c, v = self.triplets()
        keep = (rmap[r] >= 0) & (cmap[c] >= 0)
        return SparseMatrix.from_triplets(rows.size, cols.size, rmap[r[keep]], cmap[c[keep]], v[keep])

    def allclose(self, other, rtol=0.0, atol=0.0):
        return self.shape == other.shape and np.allclose(self.to_dense(), other.to_dense(), rtol=rtol, atol=atol)


def combine(a, A, b, B):
    """Return a*A + b*B."""
    if A.shape != B.shape:
        raise SparseError(f"shape mismatch {A.shape} vs {B.shape}")
    ra, ca, va = A.triplets()
    rb, cb, vb = B.triplets()
    return SparseMatrix.from_triplets(
        A.nrows, A.ncols,
        np.concatenate((ra, rb)), np.concatenate((ca, cb)), np.concatenate((a * va, b * vb)),
    )


def block(blocks):
    """Assemble a block matrix from a nested list of SparseMatrix / None."""
    heights = [next(b.nrows for b in row if b is not None) for row in blocks]
    widths = [next(blocks[i][j].ncols for i in range(len(blocks)) if blocks[i][j] is not None)
              for j in range(len(blocks[0]))]
    roff = np.concatenate(([0], np.cumsum(heights)))
    coff = np.concatenate(([0], np.cumsum(widths)))
    R, C, V = [], [], []
    for i, row in enumerate(blocks):
        for j, b in enumerate(row):
            if b is None:
                continue
            if b.shape != (heights[i], widths[j]):
                raise SparseError(f"block ({i},{j}) has shape {b.shape}")
            r, c, v = b.triplets()
            R.append(r + roff[i])
            C.append(c + coff[j])
            V.append(v)
    cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)
    return SparseMatrix.from_triplets(roff[-1], coff[-1], cat(R, np.int64), cat(C, np.int64), cat(V, np.float64))


def spmv(A, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != A.ncols:
        raise SparseError(f"dimension mismatch: matrix {A.shape}, vector {x.shape}")
    return kernels.spmv(A.nrows, A.colptr, A.rowind, A.values, x)


def spmv_t(A, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != A.nrows:
        raise SparseError(f"dimension mismatch: matrix {A.shape}ᵀ, vector {x.shape}")
    return kernels.spmv_t(A.ncols, A.colptr, A.rowind, A.values, x)


def write_matrix_market(A, path, comment=None):
    """Write A in Matrix Market coordinate real general format (1-based)."""
    r, c, v = A.triplets()
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        if comment:
            for line in comment.splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{A.nrows} {A.ncols} {A.nnz}\n")
        for i, j, x in zip(r.tolist(), c.tolist(), v.tolist()):
            fh.write(f"{i + 1} {j + 1} {x!r}\n")


def read_matrix_market(path):
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("%%MatrixMarket matrix coordinate real"):
            raise SparseError(f"unsupported Matrix Market header: {header.strip()}")
        symmetric = "symmetric" in header
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        nrows, ncols, nnz = (int(t) for t in line.split())
        data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
    r = data[:, 0].astype(np.int64) - 1
    c = data[:, 1].astype(np.int64) - 1
    v = data[:, 2]
    if symmetric:
        off = r != c
        r, c, v = np.concatenate((r, c[off])), np.concatenate((c, r[off])), np.concatenate((v, v[off]))
    return SparseMatrix.from_triplets(nrows, ncols, r, c, v, drop_zeros=False)
