"""Integrator backend selection.

The compiled core is preferred when importable; set RESONANCE_LAB_FORCE_PY=1
to force the pure-Python stepper (used by the backend benchmark and tests).
"""
from __future__ import annotations

import os

FORCE_PY_ENV = "RESONANCE_LAB_FORCE_PY"

try:
    from . import _stepper_cy as _compiled
except ImportError:  # pragma: no cover - build-dependent
    _compiled = None


def compiled_available() -> bool:
    return _compiled is not None


def use_compiled() -> bool:
    if os.environ.get(FORCE_PY_ENV, "").strip() not in ("", "0"):
        return False
    return _compiled is not None


def compiled_module():
    return _compiled


def backend_name() -> str:
    return "compiled" if use_compiled() else "python"
