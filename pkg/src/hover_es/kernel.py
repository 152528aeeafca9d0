"""Backend selection for the closed-loop integration kernel.

The compiled extension is used when it imports; set HOVER_ES_PURE_PYTHON=1 to
force the pure-Python fallback.
"""

import os

from . import _pykernel

BACKENDS = {"python": _pykernel.integrate_closed_loop}

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None
else:
    BACKENDS["cython"] = _ckernel.integrate_closed_loop

if "cython" in BACKENDS and os.environ.get("HOVER_ES_PURE_PYTHON", "") in ("", "0"):
    BACKEND = "cython"
else:
    BACKEND = "python"


def get_kernel(name=None):
    """Return the integrator for backend ``name`` (default: the selected one)."""
    name = name or BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
