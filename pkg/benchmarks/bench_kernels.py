"""Compare the numba kernels with their numpy twins.

The backend is fixed at import time by MEXPGRID_DISABLE_NUMBA, so each backend
runs in its own child process.  Timed: sparse LU of C + γG on generated
meshes, one forward/backward substitution, and a complete MEXP transient.

    python3 benchmarks/bench_kernels.py [--sizes 20 40 60] [--repeat 3]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def _best(fn, repeat):
    fn()                                   # first call pays for JIT / cache loading
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def child(sizes, repeat):
    import numpy as np

    from mexpgrid.constants import DEFAULT_GAMMA
    from mexpgrid.engine import SimConfig, mexp_transient
    from mexpgrid.mna import build_mna
    from mexpgrid.netlist import MeshSpec, generate_pdn_mesh
    from mexpgrid.sparse import BACKEND, combine, lu_solve, sparse_lu

    rows = []
    for k in sizes:
        sys_ = build_mna(generate_pdn_mesh(MeshSpec(k, k, seed=7)))
        M = combine(1.0, sys_.C, DEFAULT_GAMMA, sys_.G)
        lu = sparse_lu(M)
        b = np.random.default_rng(0).standard_normal(sys_.n)
        cfg = SimConfig(T=5e-9)
        rows.append({"n": sys_.n, "nnz_lu": int(lu.L.nnz + lu.U.nnz),
                     "factor": _best(lambda: sparse_lu(M), repeat),
                     "solve": _best(lambda: lu_solve(lu, b), repeat),
                     "mexp": _best(lambda: mexp_transient(sys_, cfg), max(1, repeat // 2))})
    json.dump({"backend": BACKEND, "rows": rows}, sys.stdout)


def run_backend(disable, sizes, repeat):
    env = dict(os.environ, MEXPGRID_DISABLE_NUMBA="1" if disable else "0")
    cmd = [sys.executable, __file__, "--child", "--repeat", str(repeat), "--sizes", *map(str, sizes)]
    out = subprocess.run(cmd, env=env, check=True, capture_output=True, text=True).stdout
    return json.loads(out)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[20, 40, 60], help="mesh side lengths")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        child(args.sizes, args.repeat)
        return
    fast = run_backend(False, args.sizes, args.repeat)
    slow = run_backend(True, args.sizes, args.repeat)
    if fast["backend"] != "numba":
        print("numba unavailable; both columns use numpy")
    print(f"{'n':>6} {'nnz(L+U)':>9} | {'factor numba':>12} {'numpy':>9} {'x':>6} | "
          f"{'solve numba':>11} {'numpy':>9} {'x':>6} | {'mexp numba':>10} {'numpy':>8} {'x':>6}")
    for a, b in zip(fast["rows"], slow["rows"]):
        cells = []
        for key in ("factor", "solve", "mexp"):
            cells.append(f"{a[key]:>10.3e}s {b[key]:>8.3e}s {b[key] / a[key]:>5.1f}x")
        print(f"{a['n']:>6} {a['nnz_lu']:>9} | " + " | ".join(cells))


if __name__ == "__main__":
    main()
