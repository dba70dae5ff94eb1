"""Acceptance suite: one PASS/FAIL line per criterion, printed even under capture.

    pytest tests/test_acceptance.py -v

Criterion 3 holds for MEXP; the plain fixed-step trapezoidal baseline misses it
on the stiffer meshes and is marked as an expected failure (see README).
"""

import math
import time

import numpy as np
import pytest

from mexpgrid.engine import (SimConfig, krylov_dimension_study, max_abs_error, mexp_transient, oracle_transient,
                             trapezoidal_transient)
from mexpgrid.krylov import block_lu_factor, block_lu_solve, eval_expm_action, rational_arnoldi
from mexpgrid.mna import build_mna, system_from_matrices
from mexpgrid.netlist import MeshSpec, PwlWaveform, generate_pdn_mesh
from mexpgrid.phi import E2, ExactReference, augmented_expm_step, build_augmented, input_block, phi_sum_oracle
from mexpgrid.sparse import combine, lu_solve, sparse_lu

TOL = 1e-4
T_ORACLE = 10e-9
AMPLITUDE = PwlWaveform.step().amplitude
# five meshes between 20 and 200 nodes, with the quoted extreme element values
ORACLE_MESHES = [(4, 5, 0), (5, 10, 1), (10, 10, 2), (10, 15, 3), (10, 20, 4)]
STIFF_MESH = (10, 20, 7)


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}")


def mesh(rows, cols, seed):
    return build_mna(generate_pdn_mesh(MeshSpec(rows, cols, seed=seed)))


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


@pytest.fixture(scope="module")
def runs():
    """Every transient run the suite makes, keyed for criteria 3, 4, 5 and 7."""
    out = {"oracle_meshes": [], "seconds": {}}
    t0 = time.perf_counter()
    for rows, cols, seed in ORACLE_MESHES:
        sys = mesh(rows, cols, seed)
        cfg = SimConfig(T=T_ORACLE, tol=TOL, tr_h=10e-12)
        ref = ExactReference(sys)
        mx = mexp_transient(sys, cfg)
        tr = trapezoidal_transient(sys, cfg)
        trd = trapezoidal_transient(sys, SimConfig(T=T_ORACLE, tol=TOL, tr_h=10e-12, tr_damping=True))
        out["oracle_meshes"].append({
            "n": sys.n_nodes, "mexp": mx, "tr": tr, "tr_damped": trd,
            "mexp_err": max_abs_error(mx, oracle_transient(sys, cfg, sample_times=mx.times, reference=ref)),
            "tr_err": max_abs_error(tr, oracle_transient(sys, cfg, sample_times=tr.times, reference=ref)),
            "tr_damped_err": max_abs_error(trd, oracle_transient(sys, cfg, sample_times=trd.times, reference=ref)),
        })
    out["seconds"][3] = time.perf_counter() - t0

    t0 = time.perf_counter()
    sys = mesh(*STIFF_MESH)
    cfg = SimConfig(T=100e-9, tol=TOL)
    mx = mexp_transient(sys, cfg)
    out["stiff"] = {"n": sys.n_nodes, "cfg": cfg, "mexp": mx,
                    "err": max_abs_error(mx, oracle_transient(sys, cfg, sample_times=mx.times))}
    out["seconds"][4] = time.perf_counter() - t0
    return out


# -- 1 ---------------------------------------------------------------------------------------

def random_dense_system(rng, n):
    C = np.diag(rng.uniform(0.5, 2.0, n)) + 0.05 * rng.standard_normal((n, n)) / math.sqrt(n)
    G = rng.standard_normal((n, n)) / math.sqrt(n)
    G = G @ G.T + 0.1 * np.eye(n)
    p = int(rng.integers(1, 4))
    B = rng.standard_normal((n, p))
    sources = [PwlWaveform(tuple((float(t), float(rng.standard_normal())) for t in (0.0, 1.0, 2.5, 4.0)))
               for _ in range(p)]
    return system_from_matrices(C, G, B, sources)


def test_criterion_1_augmentation_equivalence(capsys):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 51))
        sys = random_dense_system(rng, n)
        t = float(rng.choice([0.0, 1.0, 2.5]))
        seg = {0.0: 1.0, 1.0: 1.5, 2.5: 1.5}[t]
        h = float(rng.uniform(0.01, 1.0)) * seg
        x = rng.standard_normal(n)
        worst = max(worst, rel(augmented_expm_step(sys, x, t, h), phi_sum_oracle(sys, x, t, h)))
    secs = time.perf_counter() - t0
    ok = worst <= 1e-10 and secs < 10
    report(capsys, 1, ok, f"100 systems, worst relative gap {worst:.2e} (<= 1e-10), {secs:.1f}s (< 10s)")
    assert ok


# -- 2 ---------------------------------------------------------------------------------------

def test_criterion_2_rational_vs_standard_dimension(capsys):
    t0 = time.perf_counter()
    sys = mesh(50, 50, 7)
    study = krylov_dimension_study(sys, 10e-12, tol=TOL, T=T_ORACLE, m_cap=400)
    secs = time.perf_counter() - t0
    # a standard run that never meets the target within m_cap counts as m_cap, a lower bound
    m_std = study.m_standard if study.m_standard is not None else f"> {study.m_cap}"
    ok = study.m_rational <= 30 and study.ratio >= 5 and secs < 300
    report(capsys, 2, ok, f"2500 nodes, h=10ps: rational m={study.m_rational} (true error {study.err_rational:.1e}),"
                          f" standard m {m_std}, ratio >= {study.ratio:.1f}, {secs:.0f}s")
    assert ok


# -- 3 ---------------------------------------------------------------------------------------

def test_criterion_3_mexp_accuracy(runs, capsys):
    errs = [r["mexp_err"] for r in runs["oracle_meshes"]]
    ok = max(errs) <= 1e-3 * AMPLITUDE and runs["seconds"][3] < 120
    report(capsys, 3, ok, "MEXP max|err| per mesh " + ", ".join(
        f"n={r['n']}: {r['mexp_err']:.1e}" for r in runs["oracle_meshes"]) + " (<= 1e-3)")
    assert ok


@pytest.mark.xfail(strict=True, reason="undamped TR at 10 ps rings on the stiff modes of the quoted extremes")
def test_criterion_3_tr_accuracy(runs, capsys):
    errs = [r["tr_err"] for r in runs["oracle_meshes"]]
    ok = max(errs) <= 1e-3 * AMPLITUDE
    report(capsys, 3, ok, "TR (tr_h=10ps) max|err| per mesh " + ", ".join(
        f"n={r['n']}: {r['tr_err']:.1e}" for r in runs["oracle_meshes"]) + " (<= 1e-3)")
    assert ok


def test_criterion_3_damped_tr_supplementary(runs, capsys):
    # not the criterion: the same TR with backward-Euler half steps at source corners
    errs = [r["tr_damped_err"] for r in runs["oracle_meshes"]]
    with capsys.disabled():
        print("\n[criterion 3, supplementary] damped TR max|err| " + ", ".join(f"{e:.1e}" for e in errs))
    assert max(errs) <= 1e-3 * AMPLITUDE


# -- 4 ---------------------------------------------------------------------------------------

def test_criterion_4_substitution_count(runs, capsys):
    s = runs["stiff"]
    limit = s["cfg"].T / 10e-12 / 5
    stats = s["mexp"].stats
    ok = stats.sum_m <= limit and s["err"] <= 1e-3 * AMPLITUDE and runs["seconds"][4] < 120
    report(capsys, 4, ok, f"n={s['n']}, T=100ns: sum m = {stats.sum_m} over {stats.steps} steps"
                          f" (<= {limit:.0f}), max|err| {s['err']:.1e}, {runs['seconds'][4]:.1f}s")
    assert ok


# -- 5 ---------------------------------------------------------------------------------------

def test_criterion_5_single_factorization(runs, capsys):
    waves = [r[k] for r in runs["oracle_meshes"] for k in ("mexp", "tr", "tr_damped")] + [runs["stiff"]["mexp"]]
    counts = sorted({w.stats.factorizations for w in waves})
    ok = counts == [1]
    report(capsys, 5, ok, f"{len(waves)} MEXP/TR runs, factorization counts {counts}")
    assert ok


# -- 6 ---------------------------------------------------------------------------------------

def test_criterion_6_block_lu_equivalence(capsys):
    rng = np.random.default_rng(6)
    t0 = time.perf_counter()
    worst, sizes = 0.0, []
    for k in range(50):
        rows = int(rng.integers(1, 23))
        cols = int(rng.integers(1, max(2, 500 // rows - 1)))
        extremes = k % 2 == 0
        spec = MeshSpec(rows, cols, seed=k) if extremes else MeshSpec(rows, cols, r_range=(1.0, 100.0),
                                                                         c_range=(1e-14, 1e-12), seed=k)
        sys = build_mna(generate_pdn_mesh(spec))
        gamma = float(10 ** rng.uniform(-12, -9))
        t = float(rng.choice([0.0, 5e-12, 1e-9]))
        h = float(10 ** rng.uniform(-13, -9))
        if t < 10e-12:
            h = min(h, 10e-12 - t)
        f = block_lu_factor(sys, gamma)
        f.set_W(input_block(sys, t, h))
        aug = build_augmented(sys, t, h)
        mono = sparse_lu(combine(1.0, aug.C, -gamma, aug.G))
        v = np.concatenate((rng.standard_normal(sys.n), rng.standard_normal(2)))
        ref = lu_solve(mono, aug.C.matvec(v))
        worst = max(worst, rel(block_lu_solve(f, sys, v), ref))
        sizes.append(sys.n + 2)
    secs = time.perf_counter() - t0
    ok = worst <= 1e-12 and secs < 30
    report(capsys, 6, ok, f"50 systems, n+2 in [{min(sizes)}, {max(sizes)}], worst relative gap {worst:.1e}"
                          f" (<= 1e-12), {secs:.1f}s")
    assert ok


# -- 7 ---------------------------------------------------------------------------------------

def test_criterion_7_properties(runs, capsys):
    gamma = 1e-10
    notes, ok = [], True

    sys = mesh(10, 10, 3)
    f = block_lu_factor(sys, gamma)
    f.set_W(input_block(sys, 0.0, 10e-12))
    x = np.random.default_rng(3).standard_normal(sys.n)
    v0 = np.concatenate((x, E2))
    b = rational_arnoldi(f, sys, v0, 12)
    V = b.V
    ortho = np.abs(V.T @ V - np.eye(b.m)).max()
    SV = np.column_stack([block_lu_solve(f, sys, V[:, j]) for j in range(b.m)])
    R = SV - V @ b.H_square
    R[:, -1] -= b.h_next * b.v_next
    resid = np.abs(R).max() / max(np.linalg.norm(b.H), 1.0)
    ok &= ortho <= 1e-10 and resid <= 1e-10
    notes.append(f"orthonormality {ortho:.1e}, Arnoldi residual {resid:.1e}")

    same = np.array_equal(eval_expm_action(b, 0.0), v0)
    ok &= same
    notes.append(f"alpha=0 returns v0 exactly: {same}")

    # alpha rescaling: interior samples on an accepted basis vs a fresh run that stops there
    sys = mesh(5, 10, 1)
    cfg = SimConfig(T=3e-9, tol=TOL, output_dt=0.1e-9)
    wf = mexp_transient(sys, cfg)
    worst_scale = 0.0
    for ts in (0.3e-9, 0.7e-9, 1.5e-9, 2.2e-9):
        short = mexp_transient(sys, SimConfig(T=ts, tol=TOL))
        k = int(np.argmin(np.abs(wf.times - ts)))
        h = next(r.h for r in wf.records if r.t < ts <= r.t + r.h)
        worst_scale = max(worst_scale, np.abs(wf.samples[k] - short.samples[-1]).max() / (10 * TOL / cfg.T * h))
    # semigroup: 1 ns steps against 0.5 ns steps over the same horizon
    coarse = mexp_transient(sys, SimConfig(T=3e-9, tol=TOL))
    fine = mexp_transient(sys, SimConfig(T=3e-9, tol=TOL, h_max=0.5e-9))
    worst_semi = 0.0
    for t, y in zip(coarse.times, coarse.samples):
        j = int(np.argmin(np.abs(fine.times - t)))
        h = max((r.h for r in coarse.records if r.t < t <= r.t + r.h), default=10e-12)
        worst_semi = max(worst_semi, np.abs(fine.samples[j] - y).max() / (10 * TOL / cfg.T * h))
    ok &= worst_scale <= 1 and worst_semi <= 1
    notes.append(f"alpha-rescaling {worst_scale:.1e} and semigroup {worst_semi:.1e} of the 10*E_Tol/T*h bound")

    waves = [r["mexp"] for r in runs["oracle_meshes"]] + [runs["stiff"]["mexp"], wf, coarse, fine]
    budget = max(w.stats.err_sum for w in waves)
    ok &= budget <= TOL
    notes.append(f"largest sum of step errors {budget:.1e} over {len(waves)} runs (<= E_Tol {TOL:g})")

    report(capsys, 7, ok, "; ".join(notes))
    assert ok


# -- 8 ---------------------------------------------------------------------------------------

def test_criterion_8_not_reproducible(capsys):
    with capsys.disabled():
        print("\n[criterion 8] NOT REPRODUCIBLE: industrial designs of up to 7.40M nodes and their wall-clock"
              " times are unavailable; criteria 2-4 stand in at generated-mesh scale")
    pytest.skip("industrial benchmark designs and their wall-clock times are not available")
