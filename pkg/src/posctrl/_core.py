"""Stepping-backend selection.

The compiled Cython kernel is used for builtin models when the extension was
built; everything else (expression-backed models, or the environment variable
``POSCTRL_PURE_PYTHON=1``) goes through the pure-Python fallback.
"""

from __future__ import annotations

import os

try:
    from . import _kernels  # compiled extension, optional
except ImportError:  # pragma: no cover - depends on build environment
    _kernels = None

_FORCE_PYTHON = os.environ.get("POSCTRL_PURE_PYTHON", "") not in ("", "0")


def compiled_available() -> bool:
    return _kernels is not None


def kernel_backend() -> str:
    """Name of the active stepping backend: ``"compiled"`` or ``"python"``."""
    if _kernels is None or _FORCE_PYTHON:
        return "python"
    return "compiled"


def use_compiled(model) -> bool:
    return kernel_backend() == "compiled" and model.kernel_id is not None
