"""Pure-numpy fallback kernels (no JIT).

Same signatures and results as ``_kernels_numba``.  Inner work is pushed into
vectorised slice operations where the data layout allows it; the symbolic
reach in the factorization stays a Python loop.
"""

import numpy as np


def spmv(n_rows, Ap, Ai, Ax, x):
    counts = np.diff(Ap)
    xs = np.repeat(x, counts)
    # bincount accumulates in input order, i.e. column-major like the compiled loop
    return np.bincount(Ai, weights=Ax * xs, minlength=n_rows).astype(np.float64)


def spmv_t(n_cols, Ap, Ai, Ax, x):
    prod = Ax * x[Ai]
    out = np.zeros(n_cols)
    nz = np.flatnonzero(np.diff(Ap))
    if nz.size:
        out[nz] = np.add.reduceat(prod, Ap[nz])
    return out


def lsolve_unit(Lp, Li, Lx, x):
    n = Lp.shape[0] - 1
    for j in range(n):
        xj = x[j]
        if xj != 0.0:
            lo, hi = Lp[j] + 1, Lp[j + 1]
            if hi > lo:
                x[Li[lo:hi]] -= Lx[lo:hi] * xj
    return x


def usolve(Up, Ui, Ux, x):
    n = Up.shape[0] - 1
    for j in range(n - 1, -1, -1):
        lo, hi = Up[j], Up[j + 1] - 1
        x[j] /= Ux[hi]
        xj = x[j]
        if xj != 0.0 and hi > lo:
            x[Ui[lo:hi]] -= Ux[lo:hi] * xj
    return x


def _reach(Lp, Li, pinv, rows, mark, stamp):
    order = []
    for start in rows:
        if mark[start] == stamp:
            continue
        mark[start] = stamp
        stack = [(start, Lp[pinv[start]] if pinv[start] >= 0 else 0)]
        while stack:
            j, p = stack[-1]
            jnew = pinv[j]
            end = Lp[jnew + 1] if jnew >= 0 else 0
            while p < end and mark[Li[p]] == stamp:
                p += 1
            if p < end:
                i = Li[p]
                stack[-1] = (j, p + 1)
                mark[i] = stamp
                stack.append((i, Lp[pinv[i]] if pinv[i] >= 0 else 0))
            else:
                stack.pop()
                order.append(j)
    order.reverse()
    return order


def lu_factor(n, Ap, Ai, Ax, q, tol):
    Li, Lx, Ui, Ux = [], [], [], []
    Lp = np.zeros(n + 1, dtype=np.int64)
    Up = np.zeros(n + 1, dtype=np.int64)
    Lcols = []          # per step: (rows, values) of the strictly-lower part
    pinv = -np.ones(n, dtype=np.int64)
    mark = -np.ones(n, dtype=np.int64)
    x = np.zeros(n)
    # flat views of L rebuilt lazily for the reach: keep python lists of arrays
    Lp_list = [0]
    Li_flat = []
    for k in range(n):
        col = q[k]
        rows = Ai[Ap[col]:Ap[col + 1]]
        Lp_arr = np.asarray(Lp_list, dtype=np.int64)
        reach = _reach(Lp_arr, Li_flat, pinv, rows, mark, k)
        x[rows] = Ax[Ap[col]:Ap[col + 1]]
        for j in reach:
            J = pinv[j]
            if J < 0:
                continue
            lr, lv = Lcols[J]
            if lr.size:
                x[lr] -= lv * x[j]
        reach = np.asarray(reach, dtype=np.int64)
        free = reach[pinv[reach] < 0]
        done = reach[pinv[reach] >= 0]
        Up[k] = len(Ui)
        Ui.extend(pinv[done].tolist())
        Ux.extend(x[done].tolist())
        if free.size == 0:
            return _pack(n, Lp, Li, Lx, Up, Ui, Ux, pinv, k)
        mags = np.abs(x[free])
        a = mags.max()
        if a <= 0.0:
            return _pack(n, Lp, Li, Lx, Up, Ui, Ux, pinv, k)
        ipiv = free[int(np.argmax(mags))]
        if pinv[col] < 0 and abs(x[col]) >= a * tol:
            ipiv = col
        pivot = x[ipiv]
        Ui.append(k)
        Ux.append(pivot)
        pinv[ipiv] = k
        rest = free[free != ipiv]
        vals = x[rest] / pivot
        Lp[k] = len(Li)
        Li.append(ipiv)
        Lx.append(1.0)
        Li.extend(rest.tolist())
        Lx.extend(vals.tolist())
        Lcols.append((rest, vals))
        Li_flat.append(ipiv)
        Li_flat.extend(rest.tolist())
        Lp_list.append(len(Li_flat))
        x[reach] = 0.0
    Lp[n] = len(Li)
    Up[n] = len(Ui)
    return _pack(n, Lp, Li, Lx, Up, Ui, Ux, pinv, -1)


def _pack(n, Lp, Li, Lx, Up, Ui, Ux, pinv, bad):
    Li = np.asarray(Li, dtype=np.int64)
    if bad < 0:
        Li = pinv[Li] if Li.size else Li
    return (Lp, Li, np.asarray(Lx, dtype=np.float64), Up,
            np.asarray(Ui, dtype=np.int64), np.asarray(Ux, dtype=np.float64), pinv, bad)
