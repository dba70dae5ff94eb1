"""Numerical constants shared by every solver path.

Kept in one table so acceptance runs are reproducible and a tolerance is
never tuned in two places at once.
"""

import os

# sparse LU
PIVOT_THRESHOLD = 0.1          # accept the diagonal if |a_jj| >= 0.1 * max |a_ij|
SINGULAR_PIVOT = 0.0           # pivots with |p| <= this are reported as singular

# rational Krylov
DEFAULT_GAMMA = 1e-10          # shift parameter, seconds
DEFAULT_MMAX = 30
BREAKDOWN_TOL = 1e-14          # happy breakdown: h_{m+1,m} <= tol * ||H||
HESSENBERG_COND_MAX = 1e14
RITZ_GROWTH_TOL = 1.0          # alpha*Re(1 - 1/mu) above this marks a non-physical, growing Ritz mode
RITZ_DECAY_CUTOFF = 40.0       # |f(mu)| below e^-40 is dropped exactly: the mode has decayed past roundoff
DEFLATION_LOSS_TOL = 1e-8      # start-vector weight on dropped Ritz modes tolerated by the estimator

# transient engine
DEFAULT_HMAX = 1e-9            # seconds
MAX_HALVINGS = 6
TIME_EPS = 1e-9                # relative slack when comparing simulation times

# oracle
ORACLE_MAX_STATES = 500

# kernel backend: set MEXPGRID_DISABLE_NUMBA=1 to run the pure-numpy kernels
DISABLE_NUMBA = os.environ.get("MEXPGRID_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}
