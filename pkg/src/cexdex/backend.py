"""Selects the compiled core when it is importable, else the NumPy fallback.

Set ``CEXDEX_BACKEND=python`` to force the fallback.
"""
from __future__ import annotations

import os
from types import ModuleType

from . import _fallback


def _load_compiled() -> ModuleType | None:
    try:
        from . import _core
    except ImportError:
        return None
    return _core


def get_backend(name: str | None = None) -> ModuleType:
    """Return the kernel module for ``name`` ("compiled", "python" or None for auto)."""
    if name == "python":
        return _fallback
    core = _load_compiled()
    if name == "compiled":
        if core is None:
            raise ImportError("compiled core is not built; run `pip install -e .`")
        return core
    if name is not None:
        raise ValueError(f"unknown backend {name!r}")
    return core if core is not None else _fallback


_impl = get_backend("python" if os.environ.get("CEXDEX_BACKEND") == "python" else None)
BACKEND = "python" if _impl is _fallback else "compiled"

toeplitz_assemble = _impl.toeplitz_assemble
simulate_path = _impl.simulate_path
