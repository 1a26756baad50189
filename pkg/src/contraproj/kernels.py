"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
implementation takes over.  Setting ``CONTRAPROJ_PURE_PYTHON=1`` forces the
fallback, which is how the test suite exercises both paths.
"""

import os

from . import _pykernels

if os.environ.get("CONTRAPROJ_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = _impl.BACKEND
block_norm = _impl.block_norm
block_gradient = _impl.block_gradient
ascend = _impl.ascend

__all__ = ["BACKEND", "block_norm", "block_gradient", "ascend"]
