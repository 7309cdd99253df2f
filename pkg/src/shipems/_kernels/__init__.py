"""Hot numerical kernels with a compiled core and a pure-Python fallback.

The compiled ``_core`` extension is used when it imports; set
``SHIPEMS_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pycore

BACKEND = "python"
_impl = _pycore

if os.environ.get("SHIPEMS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "cython"

fc_current_scalar = _impl.fc_current_scalar
fc_current_array = _impl.fc_current_array
h2_rate_from_current = _impl.h2_rate_from_current
static_rate = _impl.static_rate
integrate_hold = _impl.integrate_hold

__all__ = [
    "BACKEND",
    "fc_current_scalar",
    "fc_current_array",
    "h2_rate_from_current",
    "static_rate",
    "integrate_hold",
]
