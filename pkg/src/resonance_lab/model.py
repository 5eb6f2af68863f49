"""Mathematical objects: perturbed isochronous systems on the plane.

The unperturbed system is an isochronous oscillator written in amplitude/phase
coordinates (rho, phi) with base frequency omega; the perturbation is a series
of terms with amplitudes decaying like t**(-k/q), each 2*pi-periodic in the
oscillator phase and in the drive phase S.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

#: default bound on the denominator when detecting a rational frequency ratio
RATIO_DENOMINATOR_BOUND = 64
#: relative tolerance for accepting a rational frequency ratio
RATIO_TOL = 1e-9


class PhaseUndefinedError(ValueError):
    """Raised when converting the origin to polar coordinates."""


class NoResonanceError(ValueError):
    """Raised by operations that require a resonant frequency ratio."""


@dataclass(frozen=True)
class NoResonance:
    """Marker result: the drive/base frequency ratio is not (detectably) rational."""

    ratio: float

    def __bool__(self) -> bool:
        return False


@dataclass(frozen=True)
class DrivePhase:
    """Drive phase law S(t) with S'(t) = s0 + sum_k s_k * t**(-k/q).

    ``s_coeffs`` lists the correction coefficients as (k, s_k) pairs.  When no
    closed form is supplied, S(t) is integrated term by term (the k = q term
    integrates to a logarithm).
    """

    s0: float
    s_coeffs: tuple[tuple[int, float], ...] = ()
    q: int = 1
    closed_form: tuple[Callable, Callable] | None = None  # (S, S')

    def __post_init__(self):
        if self.s0 <= 0:
            raise ValueError(f"s0 must be positive, got {self.s0}")
        if self.q < 1:
            raise ValueError(f"q must be a positive integer, got {self.q}")
        for k, _ in self.s_coeffs:
            if k < 1:
                raise ValueError(f"correction index k must be >= 1, got {k}")

    def coeff(self, k: int) -> float:
        for kk, sk in self.s_coeffs:
            if kk == k:
                return sk
        return 0.0

    def S(self, t):
        if self.closed_form is not None:
            return self.closed_form[0](t)
        t = np.asarray(t, dtype=float)
        out = self.s0 * t
        for k, sk in self.s_coeffs:
            if k == self.q:
                out = out + sk * np.log(t)
            else:
                p = 1.0 - k / self.q
                out = out + sk * t**p / p
        return out

    def S_prime(self, t):
        if self.closed_form is not None:
            return self.closed_form[1](t)
        t = np.asarray(t, dtype=float)
        out = self.s0 + np.zeros_like(t)
        for k, sk in self.s_coeffs:
            out = out + sk * t ** (-k / self.q)
        return out

    def limit_frequency_error(self, t_large: float = 1e8) -> float:
        """|S'(T) - s0| at a large time; tends to 0 for a valid drive."""
        return float(abs(self.S_prime(t_large) - self.s0))


@dataclass(frozen=True)
class ResonanceData:
    """Coprime integers (kappa, varkappa) with kappa * s0 = varkappa * omega."""

    kappa: int
    varkappa: int
    omega: float

    def __post_init__(self):
        if self.omega <= 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if self.kappa < 1 or self.varkappa < 1:
            raise ValueError("kappa and varkappa must be positive integers")
        if math.gcd(self.kappa, self.varkappa) != 1:
            raise ValueError(
                f"kappa={self.kappa}, varkappa={self.varkappa} are not coprime"
            )

    @property
    def ratio(self) -> float:
        """kappa / varkappa, the factor in the rotating-frame phase."""
        return self.kappa / self.varkappa

    def check_against(self, drive: DrivePhase, rel_tol: float = 1e-12) -> None:
        lhs = self.kappa * drive.s0
        rhs = self.varkappa * self.omega
        if abs(lhs - rhs) > rel_tol * max(abs(lhs), abs(rhs)):
            raise ValueError(
                f"kappa*s0 = {lhs} != varkappa*omega = {rhs} beyond tolerance"
            )


@dataclass(frozen=True)
class PerturbationTerm:
    """One order of the perturbation: rates f, g at decay exponent -k/q.

    ``f(rho, phi, S)`` is the amplitude rate, ``g(rho, phi, S)`` the phase
    rate; both must be 2*pi-periodic in phi and in S and accept numpy arrays.
    """

    k: int
    f: Callable
    g: Callable

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"term index k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class PolarState:
    rho: float
    phi: float
    t: float


@dataclass(frozen=True)
class CartesianState:
    x1: float
    x2: float
    t: float


@dataclass(frozen=True)
class SystemSpec:
    """A perturbed isochronous system.

    ``cartesian_rhs(x1, x2, t) -> (dx1, dx2)`` is optional and, when present,
    is the preferred integration form (no coordinate singularity at the
    origin).  ``fast_path = (family, params)`` keys a compiled integrator
    kernel for the built-in families.
    """

    drive: DrivePhase
    resonance: ResonanceData | NoResonance
    terms: tuple[PerturbationTerm, ...]
    omega: float = 1.0
    r_max: float = 4.0
    cartesian_rhs: Callable | None = None
    name: str = "custom"
    fast_path: tuple[str, tuple[float, ...]] | None = None

    def __post_init__(self):
        if self.omega <= 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if self.r_max <= 0:
            raise ValueError(f"r_max must be positive, got {self.r_max}")
        ks = [term.k for term in self.terms]
        if any(k2 <= k1 for k1, k2 in zip(ks, ks[1:])):
            raise ValueError(f"term indices must be strictly increasing, got {ks}")
        if isinstance(self.resonance, ResonanceData):
            self.resonance.check_against(self.drive)
            if self.resonance.omega != self.omega:
                raise ValueError("resonance omega differs from system omega")

    @property
    def q(self) -> int:
        return self.drive.q

    def polar_rates(self, rho, phi, t):
        """Amplitude/phase rates (f, g) of the perturbation series at time t."""
        rho = np.asarray(rho, dtype=float)
        phi = np.asarray(phi, dtype=float)
        t = np.asarray(t, dtype=float)
        S = self.drive.S(t)
        f = np.zeros(np.broadcast(rho, phi, t).shape)
        g = np.zeros_like(f)
        for term in self.terms:
            w = t ** (-term.k / self.q)
            f = f + w * term.f(rho, phi, S)
            g = g + w * term.g(rho, phi, S)
        return f, g


def to_polar(s: CartesianState) -> PolarState:
    """(x1, x2) -> (rho, phi) with phi = -atan2(x2, x1) reduced to (-pi, pi]."""
    rho = math.hypot(s.x1, s.x2)
    if rho == 0.0:
        raise PhaseUndefinedError("phase is undefined at the origin")
    phi = -math.atan2(s.x2, s.x1)
    if phi <= -math.pi:
        phi += TWO_PI
    return PolarState(rho=rho, phi=phi, t=s.t)


def to_cartesian(p: PolarState) -> CartesianState:
    return CartesianState(
        x1=p.rho * math.cos(p.phi), x2=-p.rho * math.sin(p.phi), t=p.t
    )


def wrap_angle(phi):
    """Reduce an angle (array) to the representative interval (-pi, pi]."""
    phi = np.asarray(phi, dtype=float)
    out = np.mod(phi + math.pi, TWO_PI) - math.pi
    # map the -pi representative to +pi
    out = np.where(out == -math.pi, math.pi, out)
    if out.ndim == 0:
        return float(out)
    return out


def check_resonance(
    drive: DrivePhase,
    omega: float,
    max_denominator: int = RATIO_DENOMINATOR_BOUND,
    tol: float = RATIO_TOL,
) -> ResonanceData | NoResonance:
    """Detect coprime (kappa, varkappa) with kappa*s0 = varkappa*omega.

    The ratio s0/omega = varkappa/kappa is approximated by continued
    fractions with the denominator capped; near-rational ratios outside the
    tolerance are reported as NoResonance (the construction requires exact
    resonance).
    """
    if omega <= 0:
        raise ValueError(f"omega must be positive, got {omega}")
    ratio = drive.s0 / omega
    frac = Fraction(ratio).limit_denominator(max_denominator)
    if frac.numerator < 1:
        return NoResonance(ratio=ratio)
    if abs(ratio - float(frac)) > tol * max(1.0, ratio):
        return NoResonance(ratio=ratio)
    return ResonanceData(kappa=frac.denominator, varkappa=frac.numerator, omega=omega)


def cartesian_polar_rates(sys: SystemSpec, state: CartesianState):
    """Polar rates (f, g) implied by the Cartesian right-hand side.

    Used to cross-check that a Cartesian system and its polar term series
    describe the same dynamics.
    """
    if sys.cartesian_rhs is None:
        raise ValueError("system has no cartesian form")
    p = to_polar(state)
    dx1, dx2 = sys.cartesian_rhs(state.x1, state.x2, state.t)
    f = (state.x1 * dx1 + state.x2 * dx2) / p.rho
    dphi = -(state.x1 * dx2 - state.x2 * dx1) / p.rho**2
    return f, dphi - sys.omega


def spot_check_periodicity(
    term: PerturbationTerm, rng: np.random.Generator, n: int = 16, tol: float = 1e-12
) -> None:
    """Verify 2*pi periodicity of a term in phi and S at random points."""
    rho = rng.uniform(0.2, 2.0, n)
    phi = rng.uniform(-10, 10, n)
    S = rng.uniform(-10, 10, n)
    for fn in (term.f, term.g):
        base = fn(rho, phi, S)
        if not np.allclose(fn(rho, phi + TWO_PI, S), base, rtol=0, atol=tol):
            raise ValueError(f"term k={term.k} is not 2*pi-periodic in phi")
        if not np.allclose(fn(rho, phi, S + TWO_PI), base, rtol=0, atol=tol):
            raise ValueError(f"term k={term.k} is not 2*pi-periodic in S")
