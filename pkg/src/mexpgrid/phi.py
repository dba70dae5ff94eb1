"""Dense matrix exponential, the augmented phi-operator, and exact reference stepping.

With piecewise-linear inputs the step from t to t+h is exact:

    x(t+h) = e^{Ah} x + (e^{Ah} - I) A^{-1} b(t) + (e^{Ah} - Ah - I) A^{-2} (b(t+h) - b(t))/h

and the same vector is the top block of exp(Ã h) [x; e2] for the bordered
matrix Ã = [[A, W], [0, J]].  Everything here is dense and meant for small
problems or for validating the sparse Krylov path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import ORACLE_MAX_STATES
from .mna import eval_b, system_from_matrices
from .sparse import SparseMatrix, block

# -- dense expm ---------------------------------------------------------------------

_THETA = {3: 1.495585217958292e-2, 5: 2.539398330063230e-1, 7: 9.504178996162932e-1,
          9: 2.097847961257068e0, 13: 5.371920351148152e0}
_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0, 2162160.0, 110880.0,
        3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
         129060195264000.0, 10559470521600.0, 670442572800.0, 33522128640.0, 1323241920.0,
         40840800.0, 960960.0, 16380.0, 182.0, 1.0),
}


def _pade_low(A, I, m):
    b = _PADE[m]
    A2 = A @ A
    powers = [I, A2]
    for _ in range((m - 1) // 2 - 1):
        powers.append(powers[-1] @ A2)
    U = A @ sum(b[2 * k + 1] * P for k, P in enumerate(powers))
    V = sum(b[2 * k] * P for k, P in enumerate(powers))
    return U, V


def _pade13(A, I):
    b = _PADE[13]
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I)
    V = A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I
    return U, V


def dense_expm(M):
    """exp(M) by scaling and squaring with a diagonal Padé approximant (degree 3 to 13).

    Real or complex input.  The degree is the cheapest one whose backward-error
    bound covers ||M||_1; above the degree-13 bound M is scaled by 2^-s first.
    """
    A = np.asarray(M)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expm needs a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("expm argument has non-finite entries")
    A = A.astype(np.result_type(A.dtype, np.float64))
    n = A.shape[0]
    I = np.eye(n, dtype=A.dtype)
    norm = np.linalg.norm(A, 1) if n else 0.0
    if norm == 0.0:
        return I
    for m in (3, 5, 7, 9):
        if norm <= _THETA[m]:
            U, V = _pade_low(A, I, m)
            return np.linalg.solve(V - U, V + U)
    s = max(0, math.ceil(math.log2(norm / _THETA[13])))
    U, V = _pade13(A / 2.0**s, I)
    R = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        R = R @ R
    return R


# -- phi functions on scalars / vectors ------------------------------------------------------

def phi_functions(z):
    """(phi0, phi1, phi2) elementwise for real z, stable near zero."""
    z = np.asarray(z, dtype=np.float64)
    small = np.abs(z) < 0.5
    zs = np.where(small, z, 0.0)
    zl = np.where(small, 1.0, z)
    # Taylor tails: phi_k(z) = sum_j z^j / (j+k)!
    p1s = np.zeros_like(z)
    p2s = np.zeros_like(z)
    term = np.ones_like(z)
    for j in range(20):
        p1s += term / math.factorial(j + 1)
        p2s += term / math.factorial(j + 2)
        term = term * zs
    em1 = np.expm1(zl)
    p1 = np.where(small, p1s, em1 / zl)
    p2 = np.where(small, p2s, (em1 - zl) / (zl * zl))
    return np.exp(z), p1, p2


# -- augmented system ---------------------------------------------------------------------------

J = np.array([[0.0, 1.0], [0.0, 0.0]])
E2 = np.array([0.0, 1.0])


def input_block(sys, t, h):
    """W̃ = [(B u(t+h) - B u(t))/h, B u(t)], shape (n, 2)."""
    if not h > 0:
        raise ValueError(f"step must be positive, got h={h!r}")
    b0 = eval_b(sys, t)
    b1 = eval_b(sys, t + h)
    return np.column_stack(((b1 - b0) / h, b0))


@dataclass(frozen=True, eq=False)
class AugmentedSystem:
    """C̃ = blockdiag(C, I2), G̃ = [[-G, W̃], [0, J]] so that C̃ v' = G̃ v."""

    C: SparseMatrix
    G: SparseMatrix
    W: np.ndarray
    t: float
    h: float

    J = J
    e2 = E2

    @property
    def n(self):
        return self.C.nrows - 2

    def start_vector(self, x):
        return np.concatenate((np.asarray(x, dtype=np.float64), E2))


def build_augmented(sys, t, h):
    W = input_block(sys, t, h)
    n = sys.n
    Ct = block([[sys.C, None], [None, SparseMatrix.identity(2)]])
    Gt = block([[sys.G.scaled(-1.0), SparseMatrix.from_dense(W)], [None, SparseMatrix.from_dense(J)]])
    assert Ct.shape == Gt.shape == (n + 2, n + 2)
    return AugmentedSystem(Ct, Gt, W, float(t), float(h))


class OracleError(ValueError):
    pass


def _solve(M, b, what):
    try:
        out = np.linalg.solve(M, b)
    except np.linalg.LinAlgError:
        raise OracleError(f"{what} is singular; the dense oracle needs it invertible") from None
    if not np.all(np.isfinite(out)):
        raise OracleError(f"{what} is numerically singular")
    return out


def _check_cond(M, what):
    if M.size and np.linalg.cond(M) > 1e14:
        raise OracleError(f"{what} is numerically singular (condition > 1e14)")


def tail_scale(A_norm, W_norm):
    """σ for the similarity diag(I, σ, σ): brings ||σW|| to the size of ||A||.

    J is invariant under it and the top block of exp(Ãh)[x; e2/σ] is unchanged,
    but without it an input block many decades larger than A ruins the
    relative accuracy of the Padé approximant.
    """
    if W_norm == 0.0 or A_norm == 0.0:
        return 1.0
    return 2.0 ** round(math.log2(A_norm / W_norm))   # power of two: exact rescaling


def augmented_expm_step(sys, x, t, h):
    """[I 0]·exp(Ã h)·[x; e2] with Ã = C̃⁻¹G̃ formed densely (needs nonsingular C)."""
    aug = build_augmented(sys, t, h)
    Ct, Gt = aug.C.to_dense(), aug.G.to_dense()
    _check_cond(Ct, "C")
    At = _solve(Ct, Gt, "C")
    n = sys.n
    sigma = tail_scale(np.linalg.norm(At[:n, :n], 1), np.linalg.norm(At[:n, n:], 1))
    At[:n, n:] *= sigma
    v = aug.start_vector(x)
    v[n:] /= sigma
    return (dense_expm(At * h) @ v)[:n]


def phi_sum_oracle(sys, x, t, h):
    """The three-term exact PWL step, term by term with dense A = -C⁻¹G.

    A⁻¹ and A⁻² are applied as linear solves, never as explicit inverses.
    """
    if not h > 0:
        raise ValueError(f"step must be positive, got h={h!r}")
    C, G = sys.C.to_dense(), sys.G.to_dense()
    _check_cond(C, "C")
    A = -_solve(C, G, "C")
    _check_cond(A, "A = -C^-1 G")
    b0 = _solve(C, eval_b(sys, t), "C")
    slope = _solve(C, (eval_b(sys, t + h) - eval_b(sys, t)) / h, "C")
    E = dense_expm(A * h)
    x = np.asarray(x, dtype=np.float64)
    term1 = E @ x
    term2 = _solve(A, E @ b0 - b0, "A")
    term3 = _solve(A, _solve(A, E @ slope - h * (A @ slope) - slope, "A"), "A")
    return term1 + term2 + term3


# -- exact reference on a reduced ODE ------------------------------------------------------------

class ExactReference:
    """Exact stepping of an MNA system with PWL inputs.

    Nodes pinned by grounded voltage sources are substituted, algebraic
    unknowns (zero rows of C) are eliminated, and the remaining ODE with
    nonsingular C is stepped exactly: through an eigendecomposition when C is
    diagonal positive and the reduced G symmetric, otherwise through dense
    exponentials of a bordered matrix (cached per step length).
    """

    def __init__(self, sys, max_states=ORACLE_MAX_STATES):
        self.sys = sys
        C, G, B = sys.C.to_dense(), sys.G.to_dense(), sys.B.to_dense()
        n, nn = sys.n, sys.n_nodes
        # grounded voltage sources: branch column touching exactly one node row
        pinned, branch, S = [], [], []
        for k in range(nn, n):
            if not B[k].any():
                continue
            touched = np.flatnonzero(G[:nn, k])
            if touched.size == 1:
                p = int(touched[0])
                pinned.append(p)
                branch.append(k)
                S.append(B[k] / G[k, p])
        self.pinned = np.array(pinned, dtype=np.int64)
        self.branch = np.array(branch, dtype=np.int64)
        self.S = np.array(S).reshape(len(pinned), B.shape[1])
        fixed = set(pinned) | set(branch)
        free = np.array([i for i in range(n) if i not in fixed], dtype=np.int64)
        if self.pinned.size and np.any(C[np.ix_(free, self.pinned)]):
            raise OracleError("a capacitor couples a source-pinned node to a free node; not supported by the oracle")
        Bhat = B[free] - G[np.ix_(free, self.pinned)] @ self.S
        Cf, Gf = C[np.ix_(free, free)], G[np.ix_(free, free)]
        dyn = np.flatnonzero(np.any(Cf != 0, axis=1) | np.any(Cf != 0, axis=0))
        alg = np.setdiff1d(np.arange(free.size), dyn)
        if np.any(Cf[np.ix_(dyn, alg)]) or np.any(Cf[np.ix_(alg, dyn)]):
            raise OracleError("C couples differential and algebraic unknowns")
        if dyn.size == 0:
            raise OracleError("system has no dynamic states")
        if max_states is not None and dyn.size > max_states:
            raise OracleError(f"oracle limited to {max_states} dynamic states, system has {dyn.size}")
        Gaa = Gf[np.ix_(alg, alg)]
        _check_cond(Gaa, "algebraic block of G (index-2 structure)")
        Gda, Gad = Gf[np.ix_(dyn, alg)], Gf[np.ix_(alg, dyn)]
        self.Ka = _solve(Gaa, Bhat[alg], "G_aa") if alg.size else np.zeros((0, B.shape[1]))
        self.La = _solve(Gaa, Gad, "G_aa") if alg.size else np.zeros((0, dyn.size))
        self.Cd = Cf[np.ix_(dyn, dyn)]
        self.Gr = Gf[np.ix_(dyn, dyn)] - Gda @ self.La
        self.Br = Bhat[dyn] - Gda @ self.Ka
        self.free, self.dyn_full, self.alg_full = free, free[dyn], free[alg]
        self._C, self._G, self._B = C, G, B
        self._cache = {}
        _check_cond(self.Cd, "reduced C")
        c = np.diag(self.Cd)
        self.modal = (np.count_nonzero(self.Cd - np.diag(c)) == 0 and np.all(c > 0)
                      and np.allclose(self.Gr, self.Gr.T, rtol=1e-13, atol=0))
        if self.modal:
            self._dm = 1.0 / np.sqrt(c)
            lam, self._Q = np.linalg.eigh(self._dm[:, None] * self.Gr * self._dm[None, :])
            self._lam = lam
        else:
            self._A = -_solve(self.Cd, self.Gr, "reduced C")
            self._Bc = _solve(self.Cd, self.Br, "reduced C")

    @property
    def n_dynamic(self):
        return self.dyn_full.size

    def eigenvalues(self):
        """Eigenvalues of the reduced -C⁻¹G (modal path only)."""
        return -self._lam if self.modal else np.linalg.eigvals(self._A)

    def reduced_system(self):
        """The reduced ODE (nonsingular C) as an MnaSystem over the dynamic states."""
        return system_from_matrices(self.Cd, self.Gr, self.Br, self.sys.sources)

    def restrict(self, x):
        return np.asarray(x, dtype=np.float64)[self.dyn_full]

    def expand(self, xd, u, udot=None):
        """Full MNA state from the dynamic part; udot feeds currents of pinned sources."""
        x = np.zeros(self.sys.n)
        x[self.dyn_full] = xd
        if self.alg_full.size:
            x[self.alg_full] = self.Ka @ u - self.La @ xd
        if self.pinned.size:
            vp = self.S @ u
            x[self.pinned] = vp
            rhs = self._B[self.pinned] @ u - self._G[np.ix_(self.pinned, self.free)] @ x[self.free] \
                - self._G[np.ix_(self.pinned, self.pinned)] @ vp
            if udot is not None:
                rhs -= self._C[np.ix_(self.pinned, self.pinned)] @ (self.S @ udot)
            x[self.branch] = np.linalg.solve(self._G[np.ix_(self.pinned, self.branch)], rhs)
        return x

    def step(self, xd, t, h):
        """Exact advance of the dynamic state over [t, t+h]; inputs must be affine there."""
        if not h > 0:
            raise ValueError(f"step must be positive, got h={h!r}")
        u0, u1 = self.sys.u(t), self.sys.u(t + h)
        g0 = self.Br @ u0
        gs = self.Br @ (u1 - u0) / h
        if self.modal:
            Q, dm = self._Q, self._dm
            e, p1, p2 = phi_functions(-self._lam * h)
            y = Q.T @ (xd / dm)
            y = e * y + h * p1 * (Q.T @ (dm * g0)) + h * h * p2 * (Q.T @ (dm * gs))
            return dm * (Q @ y)
        E = self._bordered(h)
        nd = self.n_dynamic
        p = u0.size
        return E[:nd, :nd] @ xd + E[:nd, nd:nd + p] @ u0 + E[:nd, nd + p:] @ ((u1 - u0) / h)

    def _bordered(self, h):
        key = float(f"{h:.13g}")
        if key not in self._cache:
            nd, p = self.n_dynamic, self._Bc.shape[1]
            sigma = tail_scale(np.linalg.norm(self._A, 1), np.linalg.norm(self._Bc, 1))
            M = np.zeros((nd + 2 * p, nd + 2 * p))
            M[:nd, :nd] = self._A
            M[:nd, nd:nd + p] = sigma * self._Bc
            M[nd:nd + p, nd + p:] = np.eye(p)
            E = dense_expm(M * key)
            E[:nd, nd:] /= sigma            # undo diag(I, σ, σ): the input columns come back divided
            self._cache[key] = E
            if len(self._cache) > 64:
                self._cache.pop(next(iter(self._cache)))
        return self._cache[key]
