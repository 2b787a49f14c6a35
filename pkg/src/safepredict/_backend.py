"""Select the stepping kernel at import time.

The compiled extension is used when it was built; otherwise the pure-Python
module is used. Setting ``SAFEPREDICT_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _kernel_py

kernel = _kernel_py
NAME = "python"

if os.environ.get("SAFEPREDICT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernel as _compiled
    except ImportError:
        pass
    else:
        kernel = _compiled
        NAME = "cython"


def compiled_kernel():
    """Return the compiled kernel module, or None if it is not built."""
    try:
        from . import _kernel as _compiled
    except ImportError:
        return None
    return _compiled
