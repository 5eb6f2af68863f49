"""Numerical laboratory for resonance in planar isochronous systems with
decaying oscillatory perturbations: averaging construction, resonant
fixed-point and stability analysis, regime classification, and validation by
direct simulation.
"""
from ._backend import backend_name, compiled_available
from .model import (
    CartesianState,
    DrivePhase,
    NoResonance,
    PerturbationTerm,
    PolarState,
    ResonanceData,
    SystemSpec,
    check_resonance,
    to_cartesian,
    to_polar,
)
from .integrate import IntegratorConfig, TrajectoryRecord, integrate, resample_theta

__version__ = "0.1.0"

__all__ = [
    "CartesianState",
    "DrivePhase",
    "IntegratorConfig",
    "NoResonance",
    "PerturbationTerm",
    "PolarState",
    "ResonanceData",
    "SystemSpec",
    "TrajectoryRecord",
    "backend_name",
    "check_resonance",
    "compiled_available",
    "integrate",
    "resample_theta",
    "to_cartesian",
    "to_polar",
    "__version__",
]
