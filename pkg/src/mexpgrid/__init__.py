"""Transient power-grid simulation with the matrix exponential method (MEXP).

Rational (shift-and-invert) Krylov subspaces, adaptive stepping bounded by
piecewise-linear source breakpoints, and a single sparse LU factorization per
run.  A fixed-step trapezoidal baseline and a dense exact-stepping oracle are
included for comparison.
"""

__version__ = "0.1.0"
