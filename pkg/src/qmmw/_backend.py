"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy twin.
Setting ``QMMW_PURE_PYTHON=1`` forces the fallback.
"""

import importlib
import os

from . import _pykernels


def _load_compiled():
    if os.environ.get("QMMW_PURE_PYTHON", "").strip() not in ("", "0"):
        return None
    try:
        return importlib.import_module("qmmw._kernels")
    except ImportError:
        return None


_compiled = _load_compiled()

kernels = _compiled if _compiled is not None else _pykernels
BACKEND = "compiled" if _compiled is not None else "python"


def get_kernels(name=None):
    """Return a kernel module by name (``"compiled"``, ``"python"``) or the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "compiled":
        if _compiled is None:
            mod = importlib.import_module("qmmw._kernels")
            return mod
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def compiled_available():
    try:
        importlib.import_module("qmmw._kernels")
    except ImportError:
        return False
    return True
