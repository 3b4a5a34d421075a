"""Backend selection for the hot loops.

The compiled extension ``htl._ckernels`` is used when it imports; otherwise
the numpy versions in ``htl._pykernels`` are used. Setting the environment
variable ``HTL_PURE_PYTHON=1`` forces the fallback.
"""
import os

from htl import _pykernels

if os.environ.get("HTL_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from htl import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"

direct_convolve = _impl.direct_convolve
renewal_forward = _impl.renewal_forward
walk_supremum_block = _impl.walk_supremum_block
walk_ladder_block = _impl.walk_ladder_block
walk_supremum_stream = _impl.walk_supremum_stream
walk_ladder_stream = _impl.walk_ladder_stream

__all__ = [
    "BACKEND",
    "direct_convolve",
    "renewal_forward",
    "walk_supremum_block",
    "walk_ladder_block",
    "walk_supremum_stream",
    "walk_ladder_stream",
]
