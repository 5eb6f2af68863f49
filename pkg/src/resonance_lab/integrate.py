"""Adaptive integration of the full non-autonomous systems with trajectory
recording and rotating-frame phase tracking.

Trajectories are integrated in Cartesian form whenever the system provides
one (no coordinate singularity at the origin), otherwise in polar form with
a floor/ceiling guard on the amplitude.  The recorded phase shift is
theta = phi_unwrapped - (kappa/varkappa) * S(t).
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from . import _backend, _stepper_py
from .model import (
    CartesianState,
    NoResonance,
    PolarState,
    ResonanceData,
    SystemSpec,
    to_cartesian,
    to_polar,
)

CSV_HEADER = "t,x1,x2,rho,theta"
FAMILY_IDS = {"ex1": 0, "ex2": 1, "ex3": 2}


class StiffnessError(RuntimeError):
    """Step size underflow: the problem is too stiff for the explicit pair."""


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    h_init: float = 1e-3
    h_max: float = 1.0
    t_start: float = 1.0
    t_end: float = 1e3
    record_stride: int = 8
    rho_floor: float = 1e-6

    def __post_init__(self):
        if not (0 < self.t_start < self.t_end):
            raise ValueError(
                f"need 0 < t_start < t_end, got ({self.t_start}, {self.t_end})"
            )
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


@dataclass(frozen=True)
class TrajectoryRecord:
    """Recorded samples (t, x1, x2, rho, theta) plus run metadata."""

    t: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    rho: np.ndarray
    theta: np.ndarray
    metadata: dict
    exit_time: float | None = None
    n_steps: int = 0
    n_rejected: int = 0

    def __len__(self) -> int:
        return len(self.t)

    def tail(self, t_from: float) -> "TrajectoryRecord":
        mask = self.t >= t_from
        return TrajectoryRecord(
            t=self.t[mask],
            x1=self.x1[mask],
            x2=self.x2[mask],
            rho=self.rho[mask],
            theta=self.theta[mask],
            metadata=self.metadata,
            exit_time=self.exit_time,
            n_steps=self.n_steps,
            n_rejected=self.n_rejected,
        )

    def to_csv(self, path_or_buf) -> None:
        if hasattr(path_or_buf, "write"):
            _write_csv(self, path_or_buf)
        else:
            with open(path_or_buf, "w", encoding="ascii", newline="\n") as fh:
                _write_csv(self, fh)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        _write_csv(self, buf)
        return buf.getvalue()

    @staticmethod
    def from_csv(path, metadata: dict | None = None) -> "TrajectoryRecord":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.size == 0:
            data = data.reshape(0, 5)
        return TrajectoryRecord(
            t=data[:, 0],
            x1=data[:, 1],
            x2=data[:, 2],
            rho=data[:, 3],
            theta=data[:, 4],
            metadata=metadata or {},
        )


def _write_csv(rec: TrajectoryRecord, fh) -> None:
    fh.write(CSV_HEADER + "\n")
    for i in range(len(rec.t)):
        fh.write(
            f"{rec.t[i]:.17g},{rec.x1[i]:.17g},{rec.x2[i]:.17g},"
            f"{rec.rho[i]:.17g},{rec.theta[i]:.17g}\n"
        )


def _frame_ratio(sys: SystemSpec) -> float:
    """kappa/varkappa on resonance, 0 otherwise (theta is then the raw phase)."""
    if isinstance(sys.resonance, ResonanceData):
        return sys.resonance.ratio
    return 0.0


def _family_rhs_py(family: str, p: tuple[float, ...]):
    """Pure-Python right-hand sides for the built-in Cartesian families."""
    if family == "ex1":
        a, b, c, s0, s1 = p

        def f(t, u, v):
            S = s0 * t + s1 * math.log(t)
            return v, -u + (a + b * v + c * v * v) * math.sin(S) / t

    elif family == "ex2":
        b0, b1, c0, c1, s1 = p

        def f(t, u, v):
            S = 2.0 * t + 2.0 * s1 * math.sqrt(t)
            zs = math.sin(S)
            return v, -u + ((b0 + b1 * zs) + (c0 + c1 * zs) * v * v) * v / math.sqrt(t)

    elif family == "ex3":
        b0, b1, c0, s2 = p

        def f(t, u, v):
            S = 2.0 * t + s2 * math.log(t)
            return v, -u + (b0 + c0 * v * v) * v / math.sqrt(t) + b1 * v * math.sin(
                S
            ) / t

    else:
        raise ValueError(f"unknown fast-path family {family!r}")
    return f


def _generic_cartesian_rhs(sys: SystemSpec):
    rhs = sys.cartesian_rhs

    def f(t, u, v):
        du, dv = rhs(u, v, t)
        return float(du), float(dv)

    return f


def _polar_rhs(sys: SystemSpec):
    terms = sys.terms
    drive = sys.drive
    q = float(sys.q)
    omega = sys.omega

    def f(t, rho, phi):
        S = float(drive.S(t))
        fr = 0.0
        gr = 0.0
        for term in terms:
            w = t ** (-term.k / q)
            fr += w * float(term.f(rho, phi, S))
            gr += w * float(term.g(rho, phi, S))
        return fr, omega + gr

    return f


def integrate(
    sys: SystemSpec,
    init: CartesianState | PolarState,
    cfg: IntegratorConfig,
    backend: str | None = None,
) -> TrajectoryRecord:
    """Integrate the full system from ``init`` (taken at cfg.t_start).

    In polar mode the amplitude leaving (rho_floor, r_max] stops the run and
    records the exit time; it is an event, not an error.
    """
    if abs(init.t - cfg.t_start) > 1e-12 * max(1.0, cfg.t_start):
        raise ValueError(f"initial state at t={init.t} but t_start={cfg.t_start}")

    cartesian = sys.cartesian_rhs is not None or sys.fast_path is not None
    use_compiled = (
        sys.fast_path is not None
        and _backend.use_compiled()
        and backend != "python"
        and sys.fast_path[0] in FAMILY_IDS
    )
    if backend == "compiled" and not use_compiled:
        raise RuntimeError("compiled backend requested but unavailable")

    if cartesian:
        st = init if isinstance(init, CartesianState) else to_cartesian(init)
        if use_compiled:
            fam, params = sys.fast_path
            raw = _backend.compiled_module().integrate_family(
                FAMILY_IDS[fam],
                np.asarray(params, dtype=float),
                cfg.t_start,
                st.x1,
                st.x2,
                cfg.t_end,
                cfg.rel_tol,
                cfg.abs_tol,
                cfg.h_init,
                cfg.h_max,
                cfg.record_stride,
            )
        else:
            if sys.fast_path is not None and sys.cartesian_rhs is None:
                f = _family_rhs_py(*sys.fast_path)
            else:
                f = _generic_cartesian_rhs(sys)
            raw = _stepper_py.step_loop(
                f,
                cfg.t_start,
                st.x1,
                st.x2,
                cfg.t_end,
                cfg.rel_tol,
                cfg.abs_tol,
                cfg.h_init,
                cfg.h_max,
                cfg.record_stride,
                polar=False,
                rho_floor=cfg.rho_floor,
                r_max=sys.r_max,
            )
        x1, x2 = raw["u"], raw["v"]
        rho = np.hypot(x1, x2)
        phase = raw["phase"]
    else:
        p0 = init if isinstance(init, PolarState) else to_polar(init)
        if not (cfg.rho_floor < p0.rho <= sys.r_max):
            raise ValueError(
                f"polar initial amplitude {p0.rho} outside "
                f"({cfg.rho_floor}, {sys.r_max}]"
            )
        raw = _stepper_py.step_loop(
            _polar_rhs(sys),
            cfg.t_start,
            p0.rho,
            p0.phi,
            cfg.t_end,
            cfg.rel_tol,
            cfg.abs_tol,
            cfg.h_init,
            cfg.h_max,
            cfg.record_stride,
            polar=True,
            rho_floor=cfg.rho_floor,
            r_max=sys.r_max,
        )
        rho = raw["u"]
        phase = raw["phase"]
        x1 = rho * np.cos(phase)
        x2 = -rho * np.sin(phase)

    if raw["status"] == _stepper_py.STATUS_STIFF:
        raise StiffnessError(
            f"step size underflow near t={raw['t'][-1]:.6g} "
            f"(h < 1e-12*t); the system appears stiff"
        )

    ratio = _frame_ratio(sys)
    theta = phase - ratio * np.asarray(sys.drive.S(raw["t"]), dtype=float)
    exit_time = None
    if raw["status"] == _stepper_py.STATUS_EXIT:
        exit_time = float(raw["t_exit"])

    metadata = {
        "system": sys.name,
        "t_start": cfg.t_start,
        "t_end": cfg.t_end,
        "rel_tol": cfg.rel_tol,
        "abs_tol": cfg.abs_tol,
        "record_stride": cfg.record_stride,
        "initial": [float(x1[0]), float(x2[0])],
        "mode": "cartesian" if cartesian else "polar",
        "backend": "compiled" if use_compiled else "python",
    }
    return TrajectoryRecord(
        t=raw["t"],
        x1=np.asarray(x1, dtype=float),
        x2=np.asarray(x2, dtype=float),
        rho=np.asarray(rho, dtype=float),
        theta=np.asarray(theta, dtype=float),
        metadata=metadata,
        exit_time=exit_time,
        n_steps=int(raw["n_steps"]),
        n_rejected=int(raw["n_rejected"]),
    )


def resample_theta(rec: TrajectoryRecord):
    """Principal value of theta plus integer winding counts.

    Returns (t, theta_principal, winding) with
    theta = theta_principal + 2*pi*winding exactly and principal in (-pi, pi].
    """
    if len(rec) == 0:
        raise ValueError("empty trajectory record")
    winding = np.ceil((rec.theta - math.pi) / (2.0 * math.pi)).astype(int)
    principal = rec.theta - 2.0 * math.pi * winding
    return rec.t, principal, winding
