"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback is. Set ``HIRISE_PURE_PYTHON=1`` to force the fallback.
"""

import os

from hirise import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("HIRISE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from hirise import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _pykernels

pool_blocks = _impl.pool_blocks
quantize = _impl.quantize


def compiled_available():
    try:
        from hirise import _ckernels  # noqa: F401
    except ImportError:
        return False
    return True
