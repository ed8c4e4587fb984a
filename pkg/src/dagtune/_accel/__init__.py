"""Backend selection for the hot numeric kernels.

The numba backend is used when available. Set ``DAGTUNE_NO_NUMBA=1`` to
force the pure-numpy fallback (useful for debugging and as a baseline in
``benchmarks/bench_accel.py``). The chosen backend name is exposed as
``BACKEND``.
"""

import os
import warnings

from .numpy_impl import KIND_MATERN52, KIND_RBF

_FLAG = os.environ.get("DAGTUNE_NO_NUMBA", "").strip().lower()
_want_numba = _FLAG not in ("1", "true", "yes")

if _want_numba:
    try:
        from . import numba_impl as _impl

        BACKEND = "numba"
    except ImportError:  # pragma: no cover - exercised only without numba
        warnings.warn("numba unavailable, falling back to pure numpy kernels")
        from . import numpy_impl as _impl

        BACKEND = "numpy"
else:
    from . import numpy_impl as _impl

    BACKEND = "numpy"

sobol_block = _impl.sobol_block
pairwise_sqdiff = _impl.pairwise_sqdiff
kernel_from_sqdiff = _impl.kernel_from_sqdiff
kernel_grad_sums = _impl.kernel_grad_sums
cross_kernel = _impl.cross_kernel

__all__ = [
    "BACKEND",
    "KIND_MATERN52",
    "KIND_RBF",
    "sobol_block",
    "pairwise_sqdiff",
    "kernel_from_sqdiff",
    "kernel_grad_sums",
    "cross_kernel",
]
