"""Kernel backend selection.

The compiled extension is used when it imports cleanly. Setting
``EXPOSIM_PURE_PYTHON=1`` forces the pure-Python fallback.
"""

import logging
import os

from . import _fallback

_logger = logging.getLogger(__name__)

BACKENDS = {"python": _fallback}

try:
    from . import _kernels
except ImportError:  # extension not built
    _kernels = None
else:
    BACKENDS["compiled"] = _kernels

if os.environ.get("EXPOSIM_PURE_PYTHON", "").strip() not in ("", "0") or _kernels is None:
    NAME = "python"
else:
    NAME = "compiled"

kernels = BACKENDS[NAME]
_logger.debug("exposim kernel backend: %s", NAME)


def get(name=None):
    """Return the kernel module for ``name`` (default: the active backend)."""
    if name is None:
        return kernels
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available; have {sorted(BACKENDS)}") from None
