"""
Numba shim.

Set ``VSPYCT_GP_DISABLE_NUMBA=1`` to force the pure-numpy kernels (useful
for debugging and for environments where numba cannot be installed).
"""
import os
import warnings

_DISABLED = os.environ.get("VSPYCT_GP_DISABLE_NUMBA", "").lower() in ("1", "true", "yes")

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kw):
        if len(args) == 1 and callable(args[0]) and not kw:
            return args[0]
        return lambda f: f

USE_NUMBA = HAVE_NUMBA and not _DISABLED

if not HAVE_NUMBA and not _DISABLED:  # pragma: no cover
    warnings.warn("numba is not installed - falling back to numpy kernels")
