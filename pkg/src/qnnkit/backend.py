"""Kernel backend selection.

The compiled extension is preferred; the pure-Python kernels are the fallback.
``QNNKIT_BACKEND`` may be ``auto`` (default), ``cython`` or ``python``.
"""

from __future__ import annotations

import importlib
import os
from types import ModuleType

from .bitops import COUNTER_FIELDS

BACKENDS = ("cython", "python")
_MODULES = {"cython": "qnnkit._ckernels", "python": "qnnkit._pykernels"}
_cache: dict[str, ModuleType] = {}


def _load(name: str) -> ModuleType:
    if name not in _cache:
        mod = importlib.import_module(_MODULES[name])
        fields = getattr(mod, "COUNTER_FIELDS", COUNTER_FIELDS)
        if tuple(fields) != COUNTER_FIELDS:
            raise ImportError(f"{mod.__name__} counter layout does not match bitops")
        _cache[name] = mod
    return _cache[name]


def available_backends() -> list[str]:
    out = []
    for name in BACKENDS:
        try:
            _load(name)
        except ImportError:
            continue
        out.append(name)
    return out


def get_kernels(name: str | None = None) -> ModuleType:
    """Kernel module for ``name``, or the environment/default choice when None."""
    if name is None:
        name = os.environ.get("QNNKIT_BACKEND", "auto").strip().lower() or "auto"
    if name == "auto":
        try:
            return _load("cython")
        except ImportError:
            return _load("python")
    if name not in _MODULES:
        raise ValueError(f"unknown backend {name!r}; choose auto, cython or python")
    return _load(name)


def backend_name(mod: ModuleType) -> str:
    return "cython" if mod.__name__.endswith("_ckernels") else "python"
