"""Hot kernels with a numba backend and a pure-numpy fallback.

The backend is chosen once at import: numba when it is importable, unless
``CUTDG_DISABLE_NUMBA`` is set to a non-empty value other than ``0`` (or
numba's own ``NUMBA_DISABLE_JIT`` is set).  Both backends are always
reachable as ``kernels.numpy_backend`` / ``kernels.numba_backend`` for
parity tests and benchmarks.
"""
import os

from . import _numpy as numpy_backend

_disabled = os.environ.get("CUTDG_DISABLE_NUMBA", "") not in ("", "0") or \
    os.environ.get("NUMBA_DISABLE_JIT", "") not in ("", "0")

try:
    from . import _numba as numba_backend
except ImportError:  # numba missing
    numba_backend = None

if numba_backend is not None and not _disabled:
    backend = numba_backend
    BACKEND = "numba"
else:
    backend = numpy_backend
    BACKEND = "numpy"

march_tets = backend.march_tets
element_matrices = backend.element_matrices
element_load = backend.element_load
edge_matrices = backend.edge_matrices
face_matrices = backend.face_matrices
scatter_blocks = backend.scatter_blocks

__all__ = ["BACKEND", "march_tets", "element_matrices", "element_load", "edge_matrices",
           "face_matrices", "scatter_blocks", "numpy_backend", "numba_backend"]
