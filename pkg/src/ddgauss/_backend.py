"""Kernel backend selection.

The compiled extension is preferred when importable; the pure-Python kernels
are the fallback.  Both implement the same draw-for-draw randomness contract,
so switching backends never changes results, only speed.  Selection happens
once at import and can be forced through the ``DDGAUSS_BACKEND`` environment
variable (``auto``, ``compiled``, or ``pure``).
"""

import os

from ddgauss import _kernels_py

_requested = os.environ.get("DDGAUSS_BACKEND", "auto").lower()
if _requested not in ("auto", "compiled", "pure"):
    raise ImportError(f"DDGAUSS_BACKEND must be auto, compiled, or pure, got {_requested!r}")

_compiled = None
if _requested in ("auto", "compiled"):
    try:
        from ddgauss import _kernels as _compiled
    except ImportError:
        if _requested == "compiled":
            raise ImportError(
                "DDGAUSS_BACKEND=compiled but the ddgauss._kernels extension is not built"
            )

_active = _compiled if _compiled is not None else _kernels_py


def backend_name():
    """Name of the active kernel backend: 'compiled' or 'pure'."""
    return _active.BACKEND_NAME


def dgauss_batch(num, den, size, rng):
    return _active.dgauss_batch(num, den, size, rng)


def fwht_inplace(x):
    return _active.fwht_inplace(x)


def available_backends():
    """Mapping of backend name to kernel module, for benchmarks and tests."""
    out = {"pure": _kernels_py}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out
