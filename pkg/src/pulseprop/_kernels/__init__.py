"""Hot numerical kernels with a compiled core and a numpy fallback.

Two operations dominate pipeline runtime: brute-force k-nearest-neighbor
search over pulse feature vectors (graph construction, resampling-by-
interpolation of minority classes, the KNN classifier) and the clamped
power iteration that spreads labels through the transition matrix. Both
are provided twice:

* ``pulseprop._kernels._speedups`` -- Cython, BLAS-backed, fuses the
  update/clamp/convergence loop into one pass;
* ``pulseprop._kernels._numpy_impl`` -- composed from numpy/scipy
  primitives, always available.

The compiled module is preferred when importable. Set the environment
variable ``PULSEPROP_PURE_PYTHON=1`` to force the fallback (used by the
benchmark and by backend-equivalence tests).
"""

import os

from . import _numpy_impl

if os.environ.get("PULSEPROP_PURE_PYTHON"):
    _impl = _numpy_impl
else:
    try:
        from . import _speedups as _impl
    except ImportError:
        _impl = _numpy_impl

BACKEND = _impl.BACKEND

topk_neighbors = _impl.topk_neighbors
propagate_csr = _impl.propagate_csr
