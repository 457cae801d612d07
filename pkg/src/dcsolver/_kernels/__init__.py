"""Kernel backend selection.

The compiled Cython module is preferred when importable; the numpy reference
implementation is the fallback.  DC_SOLVER_KERNELS=auto|fast|pure overrides.
"""
from __future__ import annotations

import os

from ..errors import ConfigError
from . import pure


def get_backend(name: str):
    if name == "pure":
        return pure
    if name == "fast":
        from . import _fast

        return _fast
    raise ConfigError(f"unknown kernel backend {name!r}")


def _select():
    choice = os.environ.get("DC_SOLVER_KERNELS", "auto")
    if choice not in ("auto", "fast", "pure"):
        raise ConfigError(f"DC_SOLVER_KERNELS must be auto|fast|pure, got {choice!r}")
    if choice == "pure":
        return pure, "pure"
    try:
        return get_backend("fast"), "fast"
    except ImportError:
        if choice == "fast":
            raise ConfigError("DC_SOLVER_KERNELS=fast but the compiled module is missing")
        return pure, "pure"


backend, backend_name = _select()
