"""Transient drivers: adaptive MEXP, fixed-step trapezoidal rule, dense exact stepping.

All three start from the DC operating point at t = 0 and return a Waveform
sampled at the probe nodes.  MEXP and TR each factorize exactly one sparse
matrix per run; the counters in ``Waveform.stats`` make that checkable.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .constants import DEFAULT_GAMMA, DEFAULT_HMAX, DEFAULT_MMAX, MAX_HALVINGS, TIME_EPS
from .krylov import (KrylovBasis, SingularHessenbergError, StandardBasis, _expm_e1, block_lu_factor, eval_expm_action,
                     hessenberg_expm, posterior_error)
from .mna import dc_analysis
from .netlist import next_breakpoint
from .phi import E2, ExactReference, input_block
from .sparse import SingularMatrixError, combine, lu_solve, sparse_lu

METHODS = ("mexp", "tr", "oracle")


class EngineError(ArithmeticError):
    def __init__(self, message, t=None):
        self.t = t
        super().__init__(message)


class ConvergenceError(EngineError):
    def __init__(self, t, err, m, h):
        self.err, self.m, self.h = err, m, h
        super().__init__(f"MEXP step at t={t:.6g}s did not converge: err={err:.3g} with m={m} "
                         f"after {MAX_HALVINGS} halvings (h={h:.3g}s)", t)


@dataclass
class SimConfig:
    T: float
    tol: float = 1e-4                 # E_Tol, accumulated over the run
    gamma: float = DEFAULT_GAMMA
    h_max: float = DEFAULT_HMAX
    m_max: int = DEFAULT_MMAX
    output_dt: Optional[float] = None
    method: str = "mexp"
    tr_h: float = 10e-12
    tr_damping: bool = False          # two backward-Euler half steps after each source breakpoint
    rho: str = "unit"

    def __post_init__(self):
        for name in ("T", "tol", "gamma", "h_max", "tr_h"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v!r}")
        if int(self.m_max) < 1:
            raise ValueError("m_max must be >= 1")
        if self.output_dt is not None:
            if not self.output_dt > 0:
                raise ValueError("output_dt must be positive")
            if self.method == "mexp" and self.output_dt > self.h_max:
                raise ValueError("output_dt must not exceed h_max for MEXP sampling")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.rho not in ("unit", "exact"):
            raise ValueError("rho must be 'unit' or 'exact'")


@dataclass
class StepRecord:
    t: float
    h: float
    m: int
    err: float
    h_next: float
    halvings: int = 0


@dataclass
class RunStats:
    method: str
    m: list = field(default_factory=list)
    factorizations: int = 0
    substitutions: int = 0
    dc_seconds: float = 0.0
    lu_seconds: float = 0.0
    wall_seconds: float = 0.0
    err_sum: float = 0.0
    halvings: int = 0

    @property
    def steps(self):
        return len(self.m)

    @property
    def sum_m(self):
        return int(sum(self.m))

    @property
    def m_avg(self):
        return self.sum_m / self.steps if self.m else 0.0

    @property
    def m_peak(self):
        return max(self.m, default=0)

    def to_dict(self):
        return {"method": self.method, "N": self.steps, "sum_m": self.sum_m, "m_avg": self.m_avg,
                "m_peak": self.m_peak, "factorizations": self.factorizations,
                "substitutions": self.substitutions, "dc_seconds": self.dc_seconds,
                "lu_seconds": self.lu_seconds, "wall_seconds": self.wall_seconds,
                "err_sum": self.err_sum, "halvings": self.halvings}


@dataclass
class Waveform:
    times: np.ndarray
    samples: np.ndarray               # len(times) x len(probes)
    probes: tuple
    stats: RunStats
    final_state: Optional[np.ndarray] = None
    records: list = field(default_factory=list)

    def probe(self, label):
        return self.samples[:, self.probes.index(label)]


class _Sampler:
    def __init__(self, sys):
        self.rows = sys.probe_rows
        self.times, self.values = [], []

    def add(self, t, x):
        self.times.append(float(t))
        self.values.append(np.asarray(x)[self.rows].copy())

    def waveform(self, sys, stats, x, records=()):
        return Waveform(np.array(self.times), np.array(self.values).reshape(len(self.times), self.rows.size),
                        tuple(sys.probe_labels), stats, x, list(records))


def max_allowed_step(sources, t, h_max, T):
    """Largest h on which every source stays affine, capped by h_max and the horizon."""
    h = min(h_max, T - t)
    bp = next_breakpoint(sources, t)
    if bp is not None:
        h = min(h, bp - t)
    return h


def _advance(t, h, sources, T):
    # land exactly on breakpoints and on T, so the next step cannot start a hair early
    tn = t + h
    bp = next_breakpoint(sources, t)
    for target in (bp, T):
        if target is not None and abs(tn - target) <= TIME_EPS * h:
            return target
    return tn


def _output_times(t, tn, dt):
    if dt is None:
        return []
    k0 = math.floor(t / dt * (1 + 1e-12)) + 1
    out = []
    k = k0
    while k * dt < tn - TIME_EPS * dt:
        out.append(k * dt)
        k += 1
    return out


def _dc(sys, stats):
    t0 = time.perf_counter()
    try:
        x = dc_analysis(sys)
    finally:
        stats.dc_seconds = time.perf_counter() - t0
    return x


# -- MEXP ----------------------------------------------------------------------------------

def _estimate(basis, sys, alpha, rho):
    try:
        return posterior_error(basis, sys, alpha, rho)
    except SingularHessenbergError:
        return math.inf


def mexp_transient(sys, cfg, x0=None):
    """Adaptive MEXP: one factorization of C + γG, one rational Krylov basis per step.

    Each basis grows until the a-posteriori estimate meets the local budget
    (E_Tol/T)·h.  If m_max is reached first the step is halved; the inputs are
    affine on the original step, so W̃ and the basis stay valid and only α
    changes.
    """
    wall = time.perf_counter()
    stats = RunStats("mexp")
    x = _dc(sys, stats) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    f = block_lu_factor(sys, cfg.gamma)
    stats.factorizations = f.factorizations
    stats.lu_seconds = f.factor_seconds
    T, gamma, n = cfg.T, cfg.gamma, sys.n
    out = _Sampler(sys)
    out.add(0.0, x)
    records = []
    t = 0.0
    while t < T * (1 - TIME_EPS):
        h = max_allowed_step(sys.sources, t, cfg.h_max, T)
        f.set_W(input_block(sys, t, h))
        basis = KrylovBasis(f, sys, np.concatenate((x, E2)), cfg.m_max)
        err = math.inf
        while basis.m < cfg.m_max:
            basis.extend()
            err = _estimate(basis, sys, h / gamma, cfg.rho)
            if err <= cfg.tol / T * h or basis.breakdown:
                break
        halvings = 0
        while err > cfg.tol / T * h:
            if halvings == MAX_HALVINGS:
                raise ConvergenceError(t, err, basis.m, h)
            h *= 0.5
            halvings += 1
            err = _estimate(basis, sys, h / gamma, cfg.rho)
        tn = _advance(t, h, sys.sources, T) if halvings == 0 else t + h
        for ts in _output_times(t, tn, cfg.output_dt):
            out.add(ts, eval_expm_action(basis, (ts - t) / gamma)[:n])
        try:
            x = eval_expm_action(basis, h / gamma)[:n]
        except SingularHessenbergError as exc:
            raise EngineError(f"singular Hessenberg matrix at t={t:.6g}s: {exc}", t) from None
        if not np.all(np.isfinite(x)):
            raise EngineError(f"non-finite state after the step at t={t:.6g}s (h={h:.3g}s)", t)
        stats.m.append(basis.m)
        stats.err_sum += float(err)
        stats.halvings += halvings
        records.append(StepRecord(t, h, basis.m, err, basis.h_next, halvings))
        t = tn
        out.add(t, x)
    stats.substitutions = f.substitutions
    stats.wall_seconds = time.perf_counter() - wall
    return out.waveform(sys, stats, x, records)


# -- trapezoidal rule --------------------------------------------------------------------------

def trapezoidal_transient(sys, cfg, x0=None):
    """Fixed-step TR: (C/h + G/2) x' = (C/h - G/2) x + (b(t) + b(t+h))/2.

    The step is T/N with N = round(T/tr_h), so the grid ends exactly at T.
    TR maps a mode with λh -> -inf to a factor near -1, so whatever error a
    source corner leaves in the stiff modes rings on undamped.  With
    ``cfg.tr_damping`` the step holding a breakpoint is replaced by two
    backward-Euler half steps, which need C/(h/2) + G = 2(C/h + G/2): the
    same factorization.
    """
    wall = time.perf_counter()
    stats = RunStats("tr")
    x = _dc(sys, stats) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    N = max(1, round(cfg.T / cfg.tr_h))
    h = cfg.T / N
    t0 = time.perf_counter()
    try:
        lu = sparse_lu(combine(1.0 / h, sys.C, 0.5, sys.G))
    except SingularMatrixError as exc:
        raise EngineError(f"C/h + G/2 is singular at {sys.label_of(exc.column)} (h={h:.3g}s)", 0.0) from None
    stats.lu_seconds = time.perf_counter() - t0
    stats.factorizations = 1
    rhs_op = combine(1.0 / h, sys.C, -0.5, sys.G)
    c_over_h = sys.C.scaled(1.0 / h)
    out = _Sampler(sys)
    out.add(0.0, x)
    b0 = sys.eval_b(0.0)
    subs = 0
    t_prev = 0.0
    for k in range(1, N + 1):
        t = cfg.T if k == N else k * h
        b1 = sys.eval_b(t)
        if cfg.tr_damping and _holds_breakpoint(sys.sources, t_prev, t):
            xm = lu_solve(lu, c_over_h.matvec(x) + 0.5 * sys.eval_b(t_prev + 0.5 * h))
            x = lu_solve(lu, c_over_h.matvec(xm) + 0.5 * b1)
            subs += 2
        else:
            x = lu_solve(lu, rhs_op.matvec(x) + 0.5 * (b0 + b1))
            subs += 1
        b0, t_prev = b1, t
        stats.m.append(1)
        out.add(t, x)
    stats.substitutions = subs
    stats.wall_seconds = time.perf_counter() - wall
    return out.waveform(sys, stats, x)


def _holds_breakpoint(sources, t0, t1):
    # a breakpoint at t0 itself counts: the input slope changes right there
    bp = next_breakpoint(sources, t0 - TIME_EPS * (t1 - t0))
    return bp is not None and bp < t1 - TIME_EPS * (t1 - t0)


# -- dense exact reference ----------------------------------------------------------------------

def oracle_transient(sys, cfg, sample_times=None, reference=None):
    """Exact stepping through the reduced dense system; samples at step ends or ``sample_times``.

    Steps never cross a source breakpoint and never exceed h_max, so each
    one is an exact affine-input step.
    """
    wall = time.perf_counter()
    stats = RunStats("oracle")
    x = _dc(sys, stats)
    ref = reference or ExactReference(sys)
    T = cfg.T
    targets = None
    if sample_times is not None:
        targets = np.unique(np.clip(np.asarray(sample_times, dtype=np.float64), 0.0, T))
    out = _Sampler(sys)
    out.add(0.0, x)
    xd = ref.restrict(x)
    t = 0.0
    ti = 1 if targets is not None and targets.size and targets[0] == 0.0 else 0
    while t < T * (1 - TIME_EPS):
        h = max_allowed_step(sys.sources, t, cfg.h_max, T)
        if targets is not None and ti < targets.size:
            h = min(h, targets[ti] - t)
        tn = _advance(t, h, sys.sources, T)
        if targets is not None and ti < targets.size and abs(tn - targets[ti]) <= TIME_EPS * max(h, 1e-30):
            tn = float(targets[ti])
        if tn <= t:                     # target coincides with t after rounding
            ti += 1
            continue
        h = tn - t
        u0, u1 = sys.u(t), sys.u(tn)
        xd = ref.step(xd, t, h)
        stats.m.append(1)
        t = tn
        x = ref.expand(xd, u1, (u1 - u0) / h)
        if targets is None:
            out.add(t, x)
        elif ti < targets.size and t == targets[ti]:
            out.add(t, x)
            ti += 1
    stats.wall_seconds = time.perf_counter() - wall
    return out.waveform(sys, stats, x)


def simulate(sys, cfg, **kw):
    return {"mexp": mexp_transient, "tr": trapezoidal_transient, "oracle": oracle_transient}[cfg.method](sys, cfg, **kw)


def max_abs_error(wf, ref):
    """Largest |difference| over shared probes; ``ref`` must be sampled at wf.times."""
    if wf.times.shape != ref.times.shape or not np.allclose(wf.times, ref.times, rtol=1e-12, atol=0):
        raise ValueError("waveforms are sampled at different times")
    return float(np.max(np.abs(wf.samples - ref.samples))) if wf.samples.size else 0.0


# -- output ---------------------------------------------------------------------------------

def write_waveform_csv(wf, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", *wf.probes])
        for t, row in zip(wf.times.tolist(), wf.samples.tolist()):
            w.writerow([repr(t), *map(repr, row)])


def read_waveform_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(len(rows) - 1, len(rows[0]))
    return data[:, 0], data[:, 1:], tuple(rows[0][1:])


def write_stats_json(wf, path, extra=None):
    payload = wf.stats.to_dict()
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def write_step_records(records, fh):
    w = csv.writer(fh)
    w.writerow(["t", "h", "m", "err", "h_next", "halvings"])
    for r in records:
        w.writerow([repr(r.t), repr(r.h), r.m, repr(r.err), repr(r.h_next), r.halvings])


# -- Krylov dimension study -----------------------------------------------------------------

@dataclass
class DimensionStudy:
    h: float
    target: float
    m_rational: int              # accepted by the a-posteriori estimate
    m_rational_true: int         # smallest m whose true error meets the target
    err_rational: float          # true error at m_rational
    m_standard: Optional[int]    # None: target not reached within m_cap
    err_standard: float
    m_cap: int

    @property
    def ratio(self):
        """m_standard / m_rational; a lower bound when the standard run is censored."""
        return (self.m_standard or self.m_cap) / self.m_rational


def krylov_dimension_study(sys, h, tol=1e-4, T=10e-9, gamma=DEFAULT_GAMMA, m_max=DEFAULT_MMAX,
                           m_cap=400, check_every=5, reference=None):
    """Krylov dimension each method needs for the first step [0, h] from the DC point.

    The rational basis grows until its estimate meets (tol/T)·h, as in a
    transient run.  The standard basis is then grown until its true error
    (against the exact reference) is no worse than the larger of that budget
    and the rational result's true error, so both are compared at a matched
    accuracy and any slack goes to the standard method.
    """
    ref = reference or ExactReference(sys, max_states=None)
    x = dc_analysis(sys)
    xd = ref.restrict(x)
    exact = ref.expand(ref.step(xd, 0.0, h), sys.u(h))
    budget = tol / T * h
    nodes = np.arange(sys.n_nodes)

    def true_err(y):
        e = float(np.max(np.abs(y[nodes] - exact[nodes])))
        return e if math.isfinite(e) else math.inf

    f = block_lu_factor(sys, gamma)
    f.set_W(input_block(sys, 0.0, h))
    basis = KrylovBasis(f, sys, np.concatenate((x, E2)), m_max)
    while basis.m < m_max:
        basis.extend()
        if _estimate(basis, sys, h / gamma, "unit") <= budget or basis.breakdown:
            break
    err_r = true_err(eval_expm_action(basis, h / gamma))
    target = max(budget, err_r)
    m_true = next(m for m in range(1, basis.m + 1)
                  if m == basis.m or true_err(_rational_prefix(basis, h / gamma, m)) <= target)

    red = ref.reduced_system()
    std = StandardBasis(red, input_block(red, 0.0, h), np.concatenate((xd, E2)))

    def std_err(m):
        return true_err(ref.expand(_standard_prefix(std, h, m)[: red.n], sys.u(h)))

    m_std, err_s = None, math.inf
    while std.m < m_cap and not std.breakdown:
        std.extend()
        if std.m % check_every and not std.breakdown and std.m < m_cap:
            continue
        err_s = std_err(std.m)
        if err_s <= target:
            # the first m that meets the target lies in the last stride
            for m in range(max(1, std.m - check_every + 1), std.m + 1):
                e = std_err(m)
                if e <= target:
                    m_std, err_s = m, e
                    break
            break
    return DimensionStudy(h, target, basis.m, m_true, err_r, m_std, err_s, m_cap)


def _rational_prefix(basis, alpha, m):
    try:
        fe1, _ = hessenberg_expm(basis.H_square[:m, :m], alpha)
    except SingularHessenbergError:
        return np.full(basis.V.shape[0], np.inf)
    return basis.beta * (basis.V[:, :m] @ fe1)


def _standard_prefix(std, h, m):
    H = std.H_square()[:m, :m]
    V = np.column_stack(std.Vs[:m])
    with np.errstate(over="ignore", invalid="ignore"):
        return std.beta * (V @ _expm_e1(h * H))


__all__ = ["SimConfig", "Waveform", "RunStats", "StepRecord", "EngineError", "ConvergenceError",
           "max_allowed_step", "mexp_transient", "trapezoidal_transient", "oracle_transient", "simulate",
           "max_abs_error", "write_waveform_csv", "read_waveform_csv", "write_stats_json",
           "write_step_records", "krylov_dimension_study", "DimensionStudy"]
