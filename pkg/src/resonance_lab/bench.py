"""Built-in benchmark families: forced oscillators with decaying drive whose
averaged coefficients are known in closed form.

Each family is wired twice: as a Cartesian right-hand side (the form the
integrator uses, with a compiled kernel) and as a polar perturbation series
(the form the averaging pipeline consumes).  The closed-form coefficients
below were derived independently (symbolic trigonometric averaging) and act
as oracles for the quadrature pipeline.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .analysis import DriftReport, FixedPointReport, build_report, fill_alpha_beta
from .averaging import AveragedEntry, AveragedField
from .model import (
    DrivePhase,
    NoResonance,
    PerturbationTerm,
    SystemSpec,
    check_resonance,
    wrap_angle,
)

R_MAX_DEFAULT = 4.0

FAMILY_DEFAULTS = {
    "ex1": {"a": 1.0, "b": 2.0, "c": -1.0, "s0": 1.0, "s1": 0.0},
    "ex2": {"b0": 1.5, "b1": 1.0, "c0": -2.0, "c1": -1.0, "s1": 0.0},
    "ex3": {"b0": 1.0, "b1": 1.0, "c0": -1.0, "s2": -0.125},
}

LOCK = "lock"
DRIFT = "drift"


class RegimeMismatchError(ValueError):
    """Requested predictions for a regime the parameters do not produce."""


@dataclass(frozen=True)
class BenchFamily:
    name: str
    params: dict
    system: SystemSpec
    closed_amp: dict  # k -> Lambda_k(r, psi)
    closed_phase: dict  # k -> Omega_k(r, psi)
    n: int
    m: int
    validity: dict
    regime: str | None  # which regime the parameters imply, if any
    rho_star: float | None
    theta_star: float | None
    stability_note: str

    @property
    def q(self) -> int:
        return self.system.q

    def closed_field(self) -> AveragedField:
        entries = {}
        for k in sorted(self.closed_amp):
            entries[k] = AveragedEntry(
                amp=self.closed_amp[k],
                phase=self.closed_phase[k],
                source="closed-form",
            )
        return AveragedField(q=self.q, r_max=self.system.r_max, entries=entries)


def _build_ex1(p: dict) -> BenchFamily:
    a, b, c, s0, s1 = (p[k] for k in ("a", "b", "c", "s0", "s1"))
    drive = DrivePhase(s0=s0, s_coeffs=((1, s1),), q=1)
    resonance = check_resonance(drive, 1.0)

    def cart(x1, x2, t):
        S = s0 * t + s1 * math.log(t)
        return x2, -x1 + (a + b * x2 + c * x2 * x2) * math.sin(S) / t

    def f1(rho, phi, S):
        sp = np.sin(phi)
        return -(a - b * rho * sp + c * rho**2 * sp**2) * np.sin(S) * sp

    def g1(rho, phi, S):
        sp = np.sin(phi)
        return -(a - b * rho * sp + c * rho**2 * sp**2) * np.sin(S) * np.cos(phi) / rho

    system = SystemSpec(
        drive=drive,
        resonance=resonance,
        terms=(PerturbationTerm(k=1, f=f1, g=g1),),
        omega=1.0,
        r_max=R_MAX_DEFAULT,
        cartesian_rhs=cart,
        name="ex1",
        fast_path=("ex1", (a, b, c, s0, s1)),
    )

    closed_amp = {
        1: lambda r, psi: -(4 * a + 3 * c * r**2) * np.cos(psi) / 8,
        2: lambda r, psi: -a * c * r * np.sin(2 * psi) / 16,
    }
    closed_phase = {
        1: lambda r, psi: -s1 + (4 * a + c * r**2) * np.sin(psi) / (8 * r),
        2: lambda r, psi: (
            -5 * c**2 * r**2 / 128
            - b**2 / 12
            - (a * c / 16 + c**2 * r**2 / 32) * np.cos(2 * psi)
        ),
    }

    lock_ok = a * c < 0 and 12 * s1**2 < abs(a * c)
    validity = {
        "resonant": not isinstance(resonance, NoResonance),
        "ac_negative": a * c < 0,
        "lock": lock_ok,
    }
    rho_star = math.sqrt(-4 * a / (3 * c)) if a * c < 0 else None
    theta_star = (
        math.asin(3 * s1 * rho_star / a) if (lock_ok and rho_star is not None) else None
    )
    regime = LOCK if (lock_ok and validity["resonant"]) else None
    return BenchFamily(
        name="ex1",
        params=dict(p),
        system=system,
        closed_amp=closed_amp,
        closed_phase=closed_phase,
        n=1,
        m=1,
        validity=validity,
        regime=regime,
        rho_star=rho_star,
        theta_star=theta_star,
        stability_note="branches with (-1)^k c > 0 are stable locks",
    )


def _build_ex2(p: dict) -> BenchFamily:
    b0, b1, c0, c1, s1 = (p[k] for k in ("b0", "b1", "c0", "c1", "s1"))
    drive = DrivePhase(s0=2.0, s_coeffs=((1, s1),), q=2)
    resonance = check_resonance(drive, 1.0)

    def cart(x1, x2, t):
        S = 2.0 * t + 2.0 * s1 * math.sqrt(t)
        zs = math.sin(S)
        return x2, -x1 + ((b0 + b1 * zs) + (c0 + c1 * zs) * x2 * x2) * x2 / math.sqrt(t)

    def f1(rho, phi, S):
        sp = np.sin(phi)
        bS = b0 + b1 * np.sin(S)
        cS = c0 + c1 * np.sin(S)
        return rho * (bS + cS * rho**2 * sp**2) * sp**2

    def g1(rho, phi, S):
        sp = np.sin(phi)
        bS = b0 + b1 * np.sin(S)
        cS = c0 + c1 * np.sin(S)
        return (bS + cS * rho**2 * sp**2) * sp * np.cos(phi)

    system = SystemSpec(
        drive=drive,
        resonance=resonance,
        terms=(PerturbationTerm(k=1, f=f1, g=g1),),
        omega=1.0,
        r_max=R_MAX_DEFAULT,
        cartesian_rhs=cart,
        name="ex2",
        fast_path=("ex2", (b0, b1, c0, c1, s1)),
    )

    closed_amp = {
        1: lambda r, psi: r
        * (4 * b0 + 3 * c0 * r**2 + 2 * (b1 + c1 * r**2) * np.sin(2 * psi))
        / 8,
    }
    closed_phase = {
        1: lambda r, psi: (-4 * s1 + (2 * b1 + c1 * r**2) * np.cos(2 * psi)) / 8,
    }

    tied = abs(4 * b0 * c1 - 3 * c0 * b1) <= 1e-9 * max(
        1.0, abs(4 * b0 * c1), abs(3 * c0 * b1)
    )
    delta = 2 * b0 / b1 if b1 != 0 else math.inf
    validity = {
        "delta_tied": tied,
        "delta_gt_1": delta > 1,
        "b1c1_negative": b1 * c1 < 0,
        "lock": abs(b1) > 4 * abs(s1),
        "drift": abs(b1) < 4 * abs(s1),
    }
    rho_star = math.sqrt(-b1 / c1) if b1 * c1 < 0 else None
    theta_star = (
        0.5 * math.acos(4 * s1 / b1) if (validity["lock"] and b1 != 0) else None
    )
    regime = None
    if tied and delta > 1 and b1 * c1 < 0:
        regime = LOCK if validity["lock"] else (DRIFT if validity["drift"] else None)
    return BenchFamily(
        name="ex2",
        params=dict(p),
        system=system,
        closed_amp=closed_amp,
        closed_phase=closed_phase,
        n=1,
        m=1,
        validity=validity,
        regime=regime,
        rho_star=rho_star,
        theta_star=theta_star,
        stability_note="locks on the +theta* branches are stable iff b1 > 0; "
        "the drift circle is stable iff b1 > 0",
    )


def _build_ex3(p: dict) -> BenchFamily:
    b0, b1, c0, s2 = (p[k] for k in ("b0", "b1", "c0", "s2"))
    drive = DrivePhase(s0=2.0, s_coeffs=((2, s2),), q=2)
    resonance = check_resonance(drive, 1.0)

    def cart(x1, x2, t):
        S = 2.0 * t + s2 * math.log(t)
        return (
            x2,
            -x1
            + (b0 + c0 * x2 * x2) * x2 / math.sqrt(t)
            + b1 * x2 * math.sin(S) / t,
        )

    def f1(rho, phi, S):
        sp = np.sin(phi)
        return rho * (b0 + c0 * rho**2 * sp**2) * sp**2 + 0.0 * np.asarray(S)

    def g1(rho, phi, S):
        sp = np.sin(phi)
        return (b0 + c0 * rho**2 * sp**2) * sp * np.cos(phi) + 0.0 * np.asarray(S)

    def f2(rho, phi, S):
        sp = np.sin(phi)
        return b1 * rho * sp**2 * np.sin(S)

    def g2(rho, phi, S):
        return b1 * np.sin(phi) * np.cos(phi) * np.sin(S)

    system = SystemSpec(
        drive=drive,
        resonance=resonance,
        terms=(
            PerturbationTerm(k=1, f=f1, g=g1),
            PerturbationTerm(k=2, f=f2, g=g2),
        ),
        omega=1.0,
        r_max=R_MAX_DEFAULT,
        cartesian_rhs=cart,
        name="ex3",
        fast_path=("ex3", (b0, b1, c0, s2)),
    )

    closed_amp = {
        1: lambda r, psi: r * (4 * b0 + 3 * c0 * r**2) / 8 + 0.0 * psi,
        2: lambda r, psi: b1 * r * np.sin(2 * psi) / 4,
    }
    closed_phase = {
        1: lambda r, psi: np.zeros(np.broadcast(r, psi).shape),
        2: lambda r, psi: (
            -32 * b0**2
            - 48 * b0 * c0 * r**2
            - 27 * c0**2 * r**4
            - 128 * s2
            + 64 * b1 * np.cos(2 * psi)
        )
        / 256,
    }

    B = b0**2 + 8 * s2
    validity = {
        "b0c0_negative": b0 * c0 < 0,
        "lock": abs(B) < 4 * abs(b1),
        "drift": abs(B) > 4 * abs(b1),
    }
    rho_star = math.sqrt(-4 * b0 / (3 * c0)) if b0 * c0 < 0 else None
    theta_star = 0.5 * math.acos(B / (4 * b1)) if (validity["lock"] and b1 != 0) else None
    regime = None
    if b0 * c0 < 0:
        regime = LOCK if validity["lock"] else (DRIFT if validity["drift"] else None)
    return BenchFamily(
        name="ex3",
        params=dict(p),
        system=system,
        closed_amp=closed_amp,
        closed_phase=closed_phase,
        n=1,
        m=2,
        validity=validity,
        regime=regime,
        rho_star=rho_star,
        theta_star=theta_star,
        stability_note="locks on branches with b1 sin(2 theta*) > 1/2 are stable; "
        "the drift circle is stable iff b0 > 0",
    )


_BUILDERS = {"ex1": _build_ex1, "ex2": _build_ex2, "ex3": _build_ex3}


def build(name: str, params: dict | None = None) -> BenchFamily:
    """Construct a benchmark family by name with keyword parameters."""
    if name not in _BUILDERS:
        raise ValueError(f"unknown family {name!r}; choose from {sorted(_BUILDERS)}")
    p = dict(FAMILY_DEFAULTS[name])
    for key, val in (params or {}).items():
        if key not in p:
            raise ValueError(f"unknown parameter {key!r} for family {name}")
        p[key] = float(val)
    if not all(math.isfinite(v) for v in p.values()):
        raise ValueError("family parameters must be finite")
    return _BUILDERS[name](p)


def lock_branches(fam: BenchFamily) -> list[tuple[float, bool]]:
    """Representative lock phases in (-pi, pi] with their predicted stability."""
    if fam.theta_star is None:
        raise RegimeMismatchError(f"{fam.name} parameters do not define a lock")
    th = fam.theta_star
    p = fam.params
    out = []
    if fam.name == "ex1":
        c = p["c"]
        # phi* = (-1)^k theta* + pi k; stability requires (-1)^k c > 0
        out.append((wrap_angle(th), c > 0))
        out.append((wrap_angle(math.pi - th), c < 0))
    elif fam.name in ("ex2", "ex3"):
        for base, plus in ((th, True), (-th, False)):
            for shift in (0.0, math.pi):
                phi = wrap_angle(base + shift)
                if fam.name == "ex2":
                    stable = p["b1"] > 0 if plus else False
                else:
                    sin2 = math.sin(2 * (base + shift))
                    stable = p["b0"] > 0 and p["b1"] * sin2 > 0.5
                out.append((phi, stable))
    seen = []
    uniq = []
    for phi, st in out:
        if not any(abs(wrap_angle(phi - s)) < 1e-12 for s in seen):
            seen.append(phi)
            uniq.append((phi, st))
    return sorted(uniq)


def predicted_report(
    fam: BenchFamily, regime: str | None = None, branch: float | None = None
):
    """Closed-form prediction: FixedPointReport (lock) or DriftReport (drift).

    For locks, ``branch`` selects the phase (nearest representative); default
    is the first stable branch.
    """
    regime = regime or fam.regime
    if regime is None:
        raise RegimeMismatchError(
            f"{fam.name} parameters define no covered regime: {fam.validity}"
        )
    if regime not in (LOCK, DRIFT):
        raise ValueError(f"unknown regime {regime!r}")
    if fam.regime != regime:
        raise RegimeMismatchError(
            f"{fam.name} parameters imply {fam.regime!r}, not {regime!r}"
        )
    field = fam.closed_field()
    if regime == LOCK:
        branches = lock_branches(fam)
        if branch is None:
            stable = [phi for phi, st in branches if st]
            if not stable:
                raise RegimeMismatchError("no stable lock branch for these parameters")
            phi = stable[0]
        else:
            phi = min((b[0] for b in branches), key=lambda x: abs(wrap_angle(x - branch)))
        return build_report(field, fam.n, fam.m, fam.rho_star, phi, residual=0.0)
    reports = _predicted_drift(fam, field)
    return reports


def _predicted_drift(fam: BenchFamily, field: AveragedField) -> DriftReport:
    from .analysis import detect_drift

    reports = detect_drift(field, fam.n, fam.m, rho_candidates=[fam.rho_star])
    for rep in reports:
        if abs(rep.rho_star - fam.rho_star) < 1e-9:
            return rep
    raise RegimeMismatchError("closed-form drift circle failed verification")


def sample_params(
    name: str, regime: str, rng: np.random.Generator
) -> dict:
    """Random valid parameters for a family in the requested regime.

    Draw ranges keep the predicted amplitude well inside the domain radius
    and the stability margins away from zero so that classifier and
    simulation agree within the documented tolerances.
    """
    if name == "ex1":
        if regime != LOCK:
            raise ValueError("ex1 covers only the lock regime")
        a = rng.uniform(0.6, 2.2)
        c = -rng.uniform(0.6, 2.2)
        b = rng.uniform(-1.5, 1.5)
        s1_max = math.sqrt(abs(a * c) / 12.0)
        s1 = rng.uniform(-0.6, 0.6) * s1_max
        return {"a": a, "b": b, "c": c, "s0": 1.0, "s1": s1}
    if name == "ex2":
        b1 = rng.uniform(0.6, 1.6)
        c1 = -rng.uniform(0.6, 1.6)
        delta = rng.uniform(1.5, 3.5)
        b0 = 0.5 * delta * b1
        c0 = 2.0 * delta * c1 / 3.0
        if regime == LOCK:
            s1 = rng.uniform(-0.15, 0.15) * b1
        elif regime == DRIFT:
            s1 = rng.choice([-1.0, 1.0]) * rng.uniform(0.35, 0.8) * b1
        else:
            raise ValueError(regime)
        return {"b0": b0, "b1": b1, "c0": c0, "c1": c1, "s1": s1}
    if name == "ex3":
        b0 = rng.uniform(0.6, 1.5)
        c0 = -rng.uniform(0.6, 1.5)
        b1 = rng.uniform(0.7, 1.6)
        if regime == LOCK:
            # keep b1*sin(2 theta*) comfortably above 1/2
            cos_target = rng.uniform(-0.5, 0.5)
            while b1 * math.sqrt(1 - cos_target**2) < 0.62:
                b1 = rng.uniform(0.9, 1.6)
                cos_target = rng.uniform(-0.4, 0.4)
            s2 = (4 * b1 * cos_target - b0**2) / 8.0
        elif regime == DRIFT:
            mag = rng.uniform(1.3, 2.5) * 4 * b1
            s2 = (rng.choice([-1.0, 1.0]) * mag - b0**2) / 8.0
        else:
            raise ValueError(regime)
        return {"b0": b0, "b1": b1, "c0": c0, "s2": s2}
    raise ValueError(f"unknown family {name!r}")
