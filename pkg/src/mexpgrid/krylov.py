"""Shift-and-invert (rational) Krylov approximation of exp(Ãh)·v.

The pencil is C̃ v' = G̃ v with C̃ = blockdiag(C, I2) and G̃ = [[-G, W̃], [0, J]].
Only C + γG is ever factorized; the bordered 2-column block W̃ changes per
step and enters the solves as a cheap correction.

The Arnoldi process runs on S - I = γ(C̃ - γG̃)⁻¹G̃ instead of the textbook
S = (C̃ - γG̃)⁻¹C̃.  Both span the same Krylov space and their Hessenberg
matrices differ by exactly I, but the shifted operator never forms the
difference S·v - v, which near equilibrium is pure cancellation noise.
"""

from __future__ import annotations

import math
import time

import numpy as np
import scipy.linalg

from .constants import (BREAKDOWN_TOL, DEFAULT_MMAX, DEFLATION_LOSS_TOL, HESSENBERG_COND_MAX, RITZ_DECAY_CUTOFF,
                        RITZ_GROWTH_TOL)
from .phi import dense_expm
from .sparse import SingularMatrixError, combine, lu_solve, sparse_lu


class KrylovError(ArithmeticError):
    pass


class SingularHessenbergError(KrylovError):
    pass


# -- block LU ------------------------------------------------------------------------------

class BlockLuFactors:
    """LU of C + γG plus the per-step border W̃.

    (C̃ - γG̃) = [[C + γG, -γW̃], [0, I - γJ]] is block upper triangular, so a
    solve is a 2x2 triangular solve for the tail followed by one sparse solve.
    """

    def __init__(self, sys, gamma, lu_sub, seconds=0.0):
        self.sys = sys
        self.gamma = float(gamma)
        self.lu_sub = lu_sub
        self.I_J_inv = np.array([[1.0, self.gamma], [0.0, 1.0]])
        self.W = None
        self.factorizations = 1
        self.substitutions = 0
        self.factor_seconds = seconds

    @property
    def n(self):
        return self.sys.n

    def set_W(self, W):
        W = np.asarray(W, dtype=np.float64)
        if W.shape != (self.n, 2):
            raise ValueError(f"W̃ must have shape {(self.n, 2)}, got {W.shape}")
        self.W = W.copy()

    def _finish(self, r1, r2):
        if self.W is None:
            raise KrylovError("W̃ is not set for the current step")
        y2 = self.I_J_inv @ r2
        y1 = lu_solve(self.lu_sub, r1 + self.gamma * (self.W @ y2))
        self.substitutions += 1
        return np.concatenate((y1, y2))

    def solve_pencil(self, rhs):
        """(C̃ - γG̃)⁻¹ rhs for an arbitrary right-hand side of length n + 2."""
        rhs = np.asarray(rhs, dtype=np.float64)
        return self._finish(rhs[: self.n], rhs[self.n:])


def block_lu_factor(sys, gamma):
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma!r}")
    t0 = time.perf_counter()
    try:
        lu = sparse_lu(combine(1.0, sys.C, gamma, sys.G))
    except SingularMatrixError as exc:
        raise KrylovError(f"C + gamma*G is singular at {sys.label_of(exc.column)} for gamma={gamma:g}; "
                          "try a different gamma") from None
    return BlockLuFactors(sys, gamma, lu, time.perf_counter() - t0)


def block_lu_solve(f, sys, v):
    """(C̃ - γG̃)⁻¹ C̃ v: z1 = C·x, z2 = tail, y2 = I_J⁻¹ z2, (C + γG) y1 = z1 + γ W̃ y2."""
    v = np.asarray(v, dtype=np.float64)
    n = sys.n
    return f._finish(sys.C.matvec(v[:n]), v[n:])


def shifted_solve(f, sys, v):
    """(S - I) v = γ (C̃ - γG̃)⁻¹ G̃ v, with G̃ v = [-G x + W̃ z; J z]."""
    v = np.asarray(v, dtype=np.float64)
    n = sys.n
    if f.W is None:
        raise KrylovError("W̃ is not set for the current step")
    x, z = v[:n], v[n:]
    r1 = f.gamma * (f.W @ z - sys.G.matvec(x))
    r2 = f.gamma * np.array([z[1], 0.0])
    return f._finish(r1, r2)


# -- Arnoldi -----------------------------------------------------------------------------------

class KrylovBasis:
    """Orthonormal basis of span{v, Sv, S²v, ...} with S = (C̃ - γG̃)⁻¹C̃.

    ``H`` is the (m+1) x m Hessenberg matrix of S itself; internally the
    shifted operator's matrix is stored and the identity added on access.
    """

    def __init__(self, f, sys, v0, capacity=DEFAULT_MMAX):
        v0 = np.asarray(v0, dtype=np.float64)
        self.start = v0.copy()
        beta = float(np.linalg.norm(v0))
        if beta == 0.0 or not math.isfinite(beta):
            raise KrylovError("Krylov start vector must be nonzero and finite")
        self.f, self.sys, self.gamma, self.beta = f, sys, f.gamma, beta
        self._cap = max(int(capacity), 1)
        self._V = np.zeros((v0.size, self._cap + 1))
        self._V[:, 0] = v0 / beta
        self._Hs = np.zeros((self._cap + 1, self._cap))
        self.m = 0
        self.breakdown = False

    def _grow(self):
        cap = 2 * self._cap
        V = np.zeros((self._V.shape[0], cap + 1))
        V[:, : self._cap + 1] = self._V
        Hs = np.zeros((cap + 1, cap))
        Hs[: self._cap + 1, : self._cap] = self._Hs
        self._V, self._Hs, self._cap = V, Hs, cap

    def extend(self):
        """One Arnoldi step: modified Gram-Schmidt plus a full second pass."""
        if self.breakdown:
            return False
        if self.m == self._cap:
            self._grow()
        j = self.m
        V, Hs = self._V, self._Hs
        w = shifted_solve(self.f, self.sys, V[:, j])
        for _ in range(2):
            for i in range(j + 1):
                c = V[:, i] @ w
                w -= c * V[:, i]
                Hs[i, j] += c
        h = float(np.linalg.norm(w))
        self.m = j + 1
        Hm = Hs[: j + 1, : j + 1] + np.eye(j + 1)
        if h <= BREAKDOWN_TOL * max(np.linalg.norm(Hm), 1.0):
            self.breakdown = True
            Hs[j + 1, j] = 0.0
            V[:, j + 1] = 0.0
        else:
            Hs[j + 1, j] = h
            V[:, j + 1] = w / h
        return True

    @property
    def V(self):
        return self._V[:, : self.m]

    @property
    def H(self):
        """(m+1) x m Hessenberg matrix of S."""
        H = self._Hs[: self.m + 1, : self.m].copy()
        H[np.arange(self.m), np.arange(self.m)] += 1.0
        return H

    @property
    def H_square(self):
        return self.H[: self.m]

    @property
    def h_next(self):
        return float(self._Hs[self.m, self.m - 1]) if self.m else 0.0

    @property
    def v_next(self):
        return self._V[:, self.m].copy()


def rational_arnoldi(f, sys, v0, m, capacity=None):
    """Build an m-dimensional basis (fewer if the space becomes invariant)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    basis = KrylovBasis(f, sys, v0, capacity or max(m, DEFAULT_MMAX))
    while basis.m < m and basis.extend():
        pass
    return basis


# -- f(H) = exp(α(I - H⁻¹)) with a guard against non-physical Ritz values ------------------------------

def _ritz_classes(mu, alpha, zero):
    """(physical, decayed) masks for Ritz values μ of the shift-invert operator.

    θ = 1 - 1/μ approximates γλ and a passive network has Re λ <= 0, so a μ
    with Re μ <= 0 or a θ that would grow like e^{αθ} is non-physical.  A
    physical μ whose f(μ) = e^{αθ} is below e^-RITZ_DECAY_CUTOFF has decayed
    past roundoff.  μ = 0 is an algebraic unknown (singular C, λ = ∞), so
    |μ| <= ``zero`` counts as decayed whatever its rounded sign.
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        theta = 1.0 - 1.0 / mu
    null = np.abs(mu) <= zero
    physical = null | ((mu.real > 0) & (alpha * theta.real <= RITZ_GROWTH_TOL))
    decayed = null | (physical & (alpha * theta.real < -RITZ_DECAY_CUTOFF))
    return physical, decayed


def _schur_split(Hb, keep):
    return scipy.linalg.schur(Hb.astype(complex), output="complex",
                              sort=lambda z: bool(keep(np.array([z]))[0]))


def hessenberg_expm(Hm, alpha, details=False):
    """Return (f e1, H⁻¹ f e1) for f(H) = exp(α(I - H⁻¹)).

    H is first diagonally balanced (an exact similarity by powers of two):
    W̃ entries in physical units make H badly scaled without making it
    singular, and both the condition test and the exponential should see
    only genuine singularity.

    Ritz values that are non-physical (see ``_ritz_classes``) or have decayed
    completely are split off through an ordered Schur form and get f = 0; the
    coupling block follows from the Sylvester equation that makes f(T)
    commute with T.  For decayed modes that is the exact limit.  For
    non-physical ones it is a guess, and with ``details`` a third value
    reports how much of e1 lay on them.
    """
    m = Hm.shape[0]
    Hb, (d, _) = scipy.linalg.matrix_balance(Hm, permute=False, separate=True)
    e1 = np.zeros(m)
    e1[0] = 1.0 / d[0]
    mu = np.linalg.eigvals(Hb)
    zero = 64 * np.finfo(float).eps * max(np.linalg.norm(Hb, 1), 1.0)
    physical, decayed = _ritz_classes(mu, alpha, zero)
    lost = 0.0
    if not physical.all():
        _, Z, k = _schur_split(Hb, lambda z: _ritz_classes(z, alpha, zero)[0])
        c = Z.conj().T @ e1
        lost = float(np.linalg.norm(c[k:]) / np.linalg.norm(c))
    keep = physical & ~decayed
    if keep.all() and np.linalg.cond(Hb) <= HESSENBERG_COND_MAX:
        Hinv = np.linalg.solve(Hb, np.eye(m))
        fe1 = dense_expm(alpha * (np.eye(m) - Hinv)) @ e1
        ge1 = Hinv @ fe1
        return (d * fe1, d * ge1, lost) if details else (d * fe1, d * ge1)
    T, Z, k = _schur_split(Hb, lambda z: _retained(z, alpha, zero))
    c = Z.conj().T @ e1
    if k == 0:
        zero = np.zeros(m)
        return (zero, zero, lost) if details else (zero, zero)
    T11, T12, T22 = T[:k, :k], T[:k, k:], T[k:, k:]
    if np.linalg.cond(T11) > HESSENBERG_COND_MAX:
        raise SingularHessenbergError("retained part of H is numerically singular")
    T11inv = scipy.linalg.solve_triangular(T11, np.eye(k, dtype=complex))
    F11 = dense_expm(alpha * (np.eye(k) - T11inv))
    top = np.empty((k, m), dtype=complex)
    top[:, :k] = F11
    if k < m:
        top[:, k:] = scipy.linalg.solve_sylvester(T11, -T22, F11 @ T12)
    fe1 = d * (Z[:, :k] @ (top @ c)).real
    ge1 = d * (Z[:, :k] @ (T11inv @ (top @ c))).real
    return (fe1, ge1, lost) if details else (fe1, ge1)


def _retained(mu, alpha, zero):
    physical, decayed = _ritz_classes(mu, alpha, zero)
    return physical & ~decayed


def eval_expm_action(basis, alpha):
    """beta · V_m · exp(α(I - H⁻¹)) · e1 ≈ exp(Ã·αγ) v."""
    if alpha == 0.0:
        return basis.start.copy()
    fe1, _ = hessenberg_expm(basis.H_square, alpha)
    return basis.beta * (basis.V @ fe1)


def posterior_error(basis, sys, alpha, rho="unit"):
    """(β/γ) · h_{m+1,m} · |e_mᵀ H⁻¹ exp(αH̃) e1| · ρ.

    ρ stands for ||(I - γÃ) v_{m+1}||.  The default uses 1 (v_{m+1} has unit
    norm); ``rho="exact"`` evaluates it densely, which needs a nonsingular C.
    A basis whose start vector leans on deflated Ritz modes has not resolved
    the step yet and reports an infinite error.
    """
    _, ge1, lost = hessenberg_expm(basis.H_square, alpha, details=True)
    if lost > DEFLATION_LOSS_TOL:
        return math.inf
    if basis.breakdown or basis.h_next == 0.0:
        return 0.0
    scale = exact_rho(basis, sys) if rho == "exact" else 1.0
    return basis.beta / basis.gamma * basis.h_next * abs(ge1[-1]) * scale


def exact_rho(basis, sys):
    """||C̃⁻¹(C̃ - γG̃) v_{m+1}||, dense; only for systems with nonsingular C."""
    n = sys.n
    v = basis.v_next
    x, z = v[:n], v[n:]
    W = basis.f.W
    r1 = sys.C.matvec(x) - basis.gamma * (W @ z - sys.G.matvec(x))
    C = sys.C.to_dense()
    try:
        y1 = np.linalg.solve(C, r1)
    except np.linalg.LinAlgError:
        raise KrylovError("exact rho needs a nonsingular C") from None
    y2 = z - basis.gamma * np.array([z[1], 0.0])
    return float(np.linalg.norm(np.concatenate((y1, y2))))


# -- conventional Arnoldi for comparison -------------------------------------------------------------

class StandardBasis:
    """Arnoldi on Ã = C̃⁻¹G̃ itself (needs nonsingular C)."""

    def __init__(self, sys, W, v0, c_factors=None):
        v0 = np.asarray(v0, dtype=np.float64)
        self.sys = sys
        self.W = np.asarray(W, dtype=np.float64)
        if c_factors is None:
            try:
                c_factors = sparse_lu(sys.C)
            except SingularMatrixError:
                raise KrylovError("standard Arnoldi needs a nonsingular C") from None
        self.cf = c_factors
        self.beta = float(np.linalg.norm(v0))
        if self.beta == 0.0:
            raise KrylovError("Krylov start vector must be nonzero")
        self.Vs = [v0 / self.beta]
        self.Hcols = []
        self.breakdown = False
        self.products = 0

    @property
    def m(self):
        return len(self.Hcols)

    def apply(self, v):
        n = self.sys.n
        x, z = v[:n], v[n:]
        self.products += 1
        y1 = lu_solve(self.cf, self.W @ z - self.sys.G.matvec(x))
        return np.concatenate((y1, [z[1], 0.0]))

    def extend(self):
        if self.breakdown:
            return False
        w = self.apply(self.Vs[-1])
        col = np.zeros(self.m + 2)
        for _ in range(2):
            for i, q in enumerate(self.Vs):
                c = q @ w
                w -= c * q
                col[i] += c
        h = float(np.linalg.norm(w))
        col[-1] = h
        self.Hcols.append(col)
        if h <= BREAKDOWN_TOL * max(np.linalg.norm(col), 1.0):
            self.breakdown = True
            col[-1] = 0.0
        else:
            self.Vs.append(w / h)
        return True

    def H_square(self):
        m = self.m
        H = np.zeros((m, m))
        for j, col in enumerate(self.Hcols):
            k = min(j + 2, m)
            H[:k, j] = col[:k]
        return H

    def expm_action(self, h):
        """beta · V_m · exp(h H_m) · e1."""
        m = self.m
        V = np.column_stack(self.Vs[:m])
        return self.beta * (V @ _expm_e1(h * self.H_square()))

    def error_estimate(self, h):
        """beta · h_{m+1,m} · |e_mᵀ exp(h H_m) e1| · h, the usual a-posteriori surrogate."""
        if self.breakdown:
            return 0.0
        return self.beta * self.Hcols[-1][-1] * abs(_expm_e1(h * self.H_square())[-1]) * h


def _expm_e1(M):
    # exp(M) e1 through the balanced similarity D⁻¹ M D
    B, (d, _) = scipy.linalg.matrix_balance(M, permute=False, separate=True)
    e1 = np.zeros(M.shape[0])
    e1[0] = 1.0 / d[0]
    # Ritz values of Ã may sit in the right half plane; let those overflow to inf
    with np.errstate(over="ignore", invalid="ignore"):
        return d * (dense_expm(B) @ e1)


def standard_arnoldi(sys, W, v0, m, c_factors=None):
    b = StandardBasis(sys, W, v0, c_factors)
    while b.m < m and b.extend():
        pass
    return b
