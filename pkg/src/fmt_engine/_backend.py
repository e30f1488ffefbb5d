"""Select the compiled kernel module when available, else the pure-Python twin.

Set ``FMT_ENGINE_BACKEND=python`` to force the fallback.
"""
import os

_choice = os.environ.get("FMT_ENGINE_BACKEND", "auto").lower()

core = None
if _choice != "python":
    try:
        from . import _core as core  # type: ignore[attr-defined]
    except ImportError:
        if _choice == "cython":
            raise
        core = None
if core is None:
    from . import _core_py as core

BACKEND = core.BACKEND
GJKNonConvergence = core.GJKNonConvergence


def get(name):
    """Return a backend module by name (``"cython"`` or ``"python"``)."""
    if name == "python":
        from . import _core_py
        return _core_py
    from . import _core
    return _core
