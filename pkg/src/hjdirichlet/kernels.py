"""Backend selection for the path kernels.

The compiled module is used when it imports; setting ``HJD_PURE_PYTHON=1``
forces the numpy fallback. Both expose the same functions.
"""
import os

from . import _pykernels

try:
    if os.environ.get("HJD_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure python requested")
    from . import _ckernels as _impl

    COMPILED = True
except ImportError:
    _impl = _pykernels
    COMPILED = False

BACKEND = "cython" if COMPILED else "numpy"

quad_action_grad = _impl.quad_action_grad
optimize_quad_path = _impl.optimize_quad_path
generic_action_grad = _pykernels.generic_action_grad
optimize_path = _pykernels.optimize_path
make_projector = _pykernels.make_projector
