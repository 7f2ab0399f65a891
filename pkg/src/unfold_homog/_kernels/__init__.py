"""Stencil kernel backend selection.

The compiled Cython module is preferred when importable; the numpy twin
is a drop-in replacement.  Set UNFOLD_HOMOG_KERNELS=numpy (or =compiled)
to force a backend; forcing an unavailable backend is an import error.
"""

import os

from . import _reference

_requested = os.environ.get("UNFOLD_HOMOG_KERNELS", "").strip().lower()

if _requested == "numpy":
    _impl = _reference
    BACKEND = "numpy"
elif _requested == "compiled":
    from . import _stencil as _impl

    BACKEND = "compiled"
elif _requested:
    raise ImportError(
        f"UNFOLD_HOMOG_KERNELS={_requested!r}: expected 'numpy' or 'compiled'"
    )
else:
    try:
        from . import _stencil as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _reference
        BACKEND = "numpy"

apply_periodic_1d = _impl.apply_periodic_1d
apply_periodic_2d = _impl.apply_periodic_2d
apply_dirichlet_1d = _impl.apply_dirichlet_1d
apply_dirichlet_2d = _impl.apply_dirichlet_2d


def backend_module(name):
    """Fetch a specific backend by name ('numpy' or 'compiled') for tests
    and benchmarks; raises ImportError if the compiled one is missing."""
    if name == "numpy":
        return _reference
    if name == "compiled":
        from . import _stencil

        return _stencil
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    names = ["numpy"]
    try:
        from . import _stencil  # noqa: F401

        names.append("compiled")
    except ImportError:
        pass
    return names
