"""Compiled compressed-column kernels.

Every function here has a twin of the same name and signature in
``_kernels_numpy``; the two must agree to rounding.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def spmv(n_rows, Ap, Ai, Ax, x):
    y = np.zeros(n_rows)
    for j in range(Ap.shape[0] - 1):
        xj = x[j]
        for p in range(Ap[j], Ap[j + 1]):
            y[Ai[p]] += Ax[p] * xj
    return y


@njit(cache=True)
def spmv_t(n_cols, Ap, Ai, Ax, x):
    y = np.zeros(n_cols)
    for j in range(n_cols):
        s = 0.0
        for p in range(Ap[j], Ap[j + 1]):
            s += Ax[p] * x[Ai[p]]
        y[j] = s
    return y


@njit(cache=True)
def lsolve_unit(Lp, Li, Lx, x):
    # unit lower triangular, diagonal stored first in each column
    n = Lp.shape[0] - 1
    for j in range(n):
        xj = x[j]
        if xj != 0.0:
            for p in range(Lp[j] + 1, Lp[j + 1]):
                x[Li[p]] -= Lx[p] * xj
    return x


@njit(cache=True)
def usolve(Up, Ui, Ux, x):
    # upper triangular, diagonal stored last in each column
    n = Up.shape[0] - 1
    for j in range(n - 1, -1, -1):
        x[j] /= Ux[Up[j + 1] - 1]
        xj = x[j]
        if xj != 0.0:
            for p in range(Up[j], Up[j + 1] - 1):
                x[Ui[p]] -= Ux[p] * xj
    return x


@njit(cache=True)
def _grow_int(a, need):
    if need <= a.shape[0]:
        return a
    b = np.empty(max(need, 2 * a.shape[0]), dtype=a.dtype)
    b[: a.shape[0]] = a
    return b


@njit(cache=True)
def _grow_float(a, need):
    if need <= a.shape[0]:
        return a
    b = np.empty(max(need, 2 * a.shape[0]), dtype=a.dtype)
    b[: a.shape[0]] = a
    return b


@njit(cache=True)
def _reach(n, Lp, Li, pinv, Ap, Ai, col, xi, pstack, mark, stamp):
    """Nonzero pattern of L \\ A[:, col] in topological order, stored in xi[top:n]."""
    top = n
    for p0 in range(Ap[col], Ap[col + 1]):
        start = Ai[p0]
        if mark[start] == stamp:
            continue
        head = 0
        xi[0] = start
        while head >= 0:
            j = xi[head]
            jnew = pinv[j]
            if mark[j] != stamp:
                mark[j] = stamp
                pstack[head] = 0 if jnew < 0 else Lp[jnew]
            done = True
            p2 = 0 if jnew < 0 else Lp[jnew + 1]
            for p in range(pstack[head], p2):
                i = Li[p]
                if mark[i] == stamp:
                    continue
                pstack[head] = p
                head += 1
                xi[head] = i
                done = False
                break
            if done:
                head -= 1
                top -= 1
                xi[top] = j
    return top


@njit(cache=True)
def lu_factor(n, Ap, Ai, Ax, q, tol):
    """Left-looking LU with threshold partial pivoting on A[:, q].

    Returns (Lp, Li, Lx, Up, Ui, Ux, pinv, bad) where ``bad`` is -1 on success
    or the step index k at which no usable pivot was found.
    """
    nnz = Ap[n]
    cap_l = 4 * nnz + n
    cap_u = 4 * nnz + n
    Lp = np.zeros(n + 1, dtype=np.int64)
    Up = np.zeros(n + 1, dtype=np.int64)
    Li = np.empty(cap_l, dtype=np.int64)
    Lx = np.empty(cap_l)
    Ui = np.empty(cap_u, dtype=np.int64)
    Ux = np.empty(cap_u)
    pinv = -np.ones(n, dtype=np.int64)
    x = np.zeros(n)
    xi = np.empty(n, dtype=np.int64)
    pstack = np.empty(n, dtype=np.int64)
    mark = -np.ones(n, dtype=np.int64)
    lnz = 0
    unz = 0
    for k in range(n):
        Lp[k] = lnz
        Up[k] = unz
        Li = _grow_int(Li, lnz + n)
        Lx = _grow_float(Lx, lnz + n)
        Ui = _grow_int(Ui, unz + n)
        Ux = _grow_float(Ux, unz + n)
        col = q[k]
        top = _reach(n, Lp, Li, pinv, Ap, Ai, col, xi, pstack, mark, k)
        for p in range(top, n):
            x[xi[p]] = 0.0
        for p in range(Ap[col], Ap[col + 1]):
            x[Ai[p]] = Ax[p]
        for px in range(top, n):
            j = xi[px]
            J = pinv[j]
            if J < 0:
                continue
            xj = x[j]
            for p in range(Lp[J] + 1, Lp[J + 1]):
                x[Li[p]] -= Lx[p] * xj
        ipiv = -1
        a = -1.0
        for px in range(top, n):
            i = xi[px]
            if pinv[i] < 0:
                t = abs(x[i])
                if t > a:
                    a = t
                    ipiv = i
            else:
                Ui[unz] = pinv[i]
                Ux[unz] = x[i]
                unz += 1
        if ipiv == -1 or a <= 0.0:
            return Lp, Li, Lx, Up, Ui, Ux, pinv, k
        if pinv[col] < 0 and abs(x[col]) >= a * tol:
            ipiv = col
        pivot = x[ipiv]
        Ui[unz] = k
        Ux[unz] = pivot
        unz += 1
        pinv[ipiv] = k
        Li[lnz] = ipiv
        Lx[lnz] = 1.0
        lnz += 1
        for px in range(top, n):
            i = xi[px]
            if pinv[i] < 0:
                Li[lnz] = i
                Lx[lnz] = x[i] / pivot
                lnz += 1
            x[i] = 0.0
    Lp[n] = lnz
    Up[n] = unz
    for p in range(lnz):
        Li[p] = pinv[Li[p]]
    return Lp, Li[:lnz].copy(), Lx[:lnz].copy(), Up, Ui[:unz].copy(), Ux[:unz].copy(), pinv, -1
