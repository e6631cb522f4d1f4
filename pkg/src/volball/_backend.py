"""Select the compiled kernels when available, else the numpy fallback.

Set ``VOLBALL_PURE_PYTHON=1`` to force the fallback.
"""

import importlib
import os

_NAMES = {"cython": "volball._ckernels", "python": "volball._pykernels"}


def load(name: str):
    """Import a kernel backend by name (``"cython"`` or ``"python"``)."""
    return importlib.import_module(_NAMES[name])


def available() -> list:
    out = []
    for name in _NAMES:
        try:
            load(name)
        except ImportError:
            continue
        out.append(name)
    return out


if os.environ.get("VOLBALL_PURE_PYTHON"):
    kernels = load("python")
else:
    try:
        kernels = load("cython")
    except ImportError:
        kernels = load("python")

BACKEND = kernels.NAME
