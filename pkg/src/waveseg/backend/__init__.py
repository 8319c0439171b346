"""Kernel backend selection.

The compiled extension (``_native``) is preferred when present; the NumPy
twin (``pure``) is the fallback. ``WAVESEG_BACKEND=pure|native`` forces a
choice, which the equivalence tests and the benchmark rely on.
"""

import importlib
import os

from . import pure

_requested = os.environ.get("WAVESEG_BACKEND", "").lower()

_native = None
if _requested != "pure":
    try:
        _native = importlib.import_module("._native", __name__)
    except ImportError:
        if _requested == "native":
            raise ImportError(
                "WAVESEG_BACKEND=native but the compiled extension is not "
                "built; run `pip install -e .` or drop the override"
            ) from None

_active = _native if _native is not None else pure

NAME = _active.NAME
dwt_axis = _active.dwt_axis
idwt_axis = _active.idwt_axis
nn_distances = _active.nn_distances


def available():
    """Names of importable backends, compiled one first when present."""
    names = []
    if _native is not None:
        names.append(_native.NAME)
    names.append(pure.NAME)
    return names


def get(name):
    """Fetch a backend module by name (for benchmarks and cross-checks)."""
    if name == "pure":
        return pure
    if name == "native" and _native is not None:
        return _native
    raise KeyError(f"backend {name!r} not available; have {available()}")
