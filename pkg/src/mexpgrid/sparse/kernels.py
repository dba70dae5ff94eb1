"""Kernel backend selection.

The compiled numba kernels are used unless ``MEXPGRID_DISABLE_NUMBA`` is set
or numba cannot be imported, in which case the numpy twins take over.
"""

from ..constants import DISABLE_NUMBA

BACKEND = "numpy"
if not DISABLE_NUMBA:
    try:
        from ._kernels_numba import lsolve_unit, lu_factor, spmv, spmv_t, usolve  # noqa: F401
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba missing
        pass

if BACKEND == "numpy":
    from ._kernels_numpy import lsolve_unit, lu_factor, spmv, spmv_t, usolve  # noqa: F401,F811
