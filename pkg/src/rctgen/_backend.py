"""Select the compiled kernel module, falling back to numpy.

Set ``RCTGEN_PURE_PYTHON=1`` to force the fallback even when the extension
is built.
"""

import os

from . import _pykernels

pykernels = _pykernels

try:
    if os.environ.get("RCTGEN_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend requested")
    from . import _ckernels as kernels

    BACKEND = "cython"
except ImportError:
    kernels = _pykernels
    BACKEND = "python"

try:
    from . import _ckernels as ckernels
except ImportError:
    ckernels = None

__all__ = ["kernels", "pykernels", "ckernels", "BACKEND"]
