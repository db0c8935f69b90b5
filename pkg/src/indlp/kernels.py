"""Select the compiled kernels when built, else the pure-Python reference.

Set ``INDLP_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

try:
    if os.environ.get("INDLP_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python kernels forced by environment")
    from . import _kernels as _impl
except ImportError:
    _impl = _kernels_py

walk_kernel = _impl.walk_kernel
sgns_kernel = _impl.sgns_kernel
IMPLEMENTATION = _impl.IMPLEMENTATION
COMPILED = IMPLEMENTATION != "python"

reference = _kernels_py
