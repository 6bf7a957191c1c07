"""Kernel backend selection.

Prefers the compiled extension (`prefopt._core`), falling back to the NumPy
implementation. Set PREFOPT_BACKEND=numpy to force the fallback, e.g. for
the backend benchmark or debugging.
"""

import os

from . import _core_np

if os.environ.get("PREFOPT_BACKEND", "").lower() in ("numpy", "python"):
    core = _core_np
else:
    try:
        from . import _core as core  # type: ignore[no-redef]
    except ImportError:
        core = _core_np

BACKEND_NAME = core.BACKEND_NAME

cross_kernel = core.cross_kernel
cross_kernel_fast = core.cross_kernel_fast
kernel_and_dfac = core.kernel_and_dfac
lengthscale_grads = core.lengthscale_grads
