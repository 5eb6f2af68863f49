"""Averaging construction: rotating frame, order-1 means, homological
solutions, and the order-2 corrected means.

All fields are represented by vectorized evaluators backed by spectral
quadrature in the drive phase S (trapezoid on a uniform grid over one
2*pi*varkappa period, spectrally accurate for smooth periodic integrands).
Radial and angular derivatives entering the order-2 construction use
small-step 4th-order central differences at the query point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import DrivePhase, NoResonance, NoResonanceError, ResonanceData, SystemSpec

TWO_PI = 2.0 * math.pi

#: sup-norm threshold under which an averaged coefficient counts as identically zero
NULL_TOL = 1e-10
#: zero-mean requirement on the homological right-hand side
MEAN_TOL = 1e-10

_FD_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0])
_FD_WEIGHTS = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0


class InconsistentAveragingError(ValueError):
    """Homological right-hand side has a nonzero S-mean."""


class IndeterminateOrderError(ValueError):
    """All computed averaged coefficients vanish on the test grid."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Quadrature/differentiation parameters for the averaging pipeline."""

    n_s: int = 128
    fd_step: float = 1e-3

    def __post_init__(self):
        if self.n_s < 64:
            raise ValueError(f"need at least 64 S-nodes, got {self.n_s}")
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")


@dataclass(frozen=True)
class RotatingField:
    """Per-order right-hand sides in the rotating frame.

    F_k(R, Psi, S) = f_k(R, kappa*S/varkappa + Psi, S) and
    G_k(R, Psi, S) = g_k(...) - kappa*s_k/varkappa; S-period 2*pi*varkappa.
    """

    system: SystemSpec

    def __post_init__(self):
        if isinstance(self.system.resonance, NoResonance):
            raise NoResonanceError(
                "rotating frame requires a resonant frequency ratio"
            )

    @property
    def resonance(self) -> ResonanceData:
        return self.system.resonance

    @property
    def s_period(self) -> float:
        return TWO_PI * self.resonance.varkappa

    def orders(self) -> tuple[int, ...]:
        ks = {t.k for t in self.system.terms}
        ks.update(k for k, _ in self.system.drive.s_coeffs)
        return tuple(sorted(ks))

    def _term(self, k: int):
        for t in self.system.terms:
            if t.k == k:
                return t
        return None

    def F(self, k: int, R, Psi, S):
        term = self._term(k)
        if term is None:
            return np.zeros(np.broadcast(R, Psi, S).shape)
        phi = self.resonance.ratio * np.asarray(S) + np.asarray(Psi)
        return np.asarray(term.f(R, phi, S), dtype=float)

    def G(self, k: int, R, Psi, S):
        shift = self.resonance.ratio * self.system.drive.coeff(k)
        term = self._term(k)
        if term is None:
            return np.full(np.broadcast(R, Psi, S).shape, -shift)
        phi = self.resonance.ratio * np.asarray(S) + np.asarray(Psi)
        return np.asarray(term.g(R, phi, S), dtype=float) - shift


@dataclass(frozen=True)
class AveragedEntry:
    """One order of the averaged system: evaluators on (r, psi)."""

    amp: Callable  # Lambda_k
    phase: Callable  # Omega_k
    source: str  # "quadrature" | "closed-form"
    fd_warning: bool = False


@dataclass(frozen=True)
class AveragedField:
    q: int
    r_max: float
    entries: dict[int, AveragedEntry] = field(default_factory=dict)

    def amp(self, k: int, r, psi):
        return self.entries[k].amp(np.asarray(r, float), np.asarray(psi, float))

    def phase(self, k: int, r, psi):
        return self.entries[k].phase(np.asarray(r, float), np.asarray(psi, float))

    def max_order(self) -> int:
        return max(self.entries)

    def with_entry(self, k: int, entry: AveragedEntry) -> "AveragedField":
        new = dict(self.entries)
        new[k] = entry
        return AveragedField(q=self.q, r_max=self.r_max, entries=new)


@dataclass(frozen=True)
class HomologicalSolution:
    """u1, v1 on an (R, Psi, S) tensor grid plus the on-demand column solver."""

    r_grid: np.ndarray
    psi_grid: np.ndarray
    n_s: int
    s_grid: np.ndarray
    u1: np.ndarray  # (n_r, n_psi, n_s)
    v1: np.ndarray
    columns: Callable  # (r, psi) -> dict of center columns


def _s_nodes(period: float, n_s: int) -> np.ndarray:
    return period * np.arange(n_s) / n_s


def _mean_free_antiderivative(rhs: np.ndarray, period: float, s0: float) -> np.ndarray:
    """Solve s0 * dU/dS = rhs (zero-mean, periodic) spectrally on the last axis."""
    n = rhs.shape[-1]
    c = np.fft.rfft(rhs, axis=-1)
    j = np.arange(c.shape[-1])
    with np.errstate(divide="ignore", invalid="ignore"):
        fac = 1.0 / (1j * j * (TWO_PI / period) * s0)
    out = np.zeros_like(c)
    out[..., 1:] = c[..., 1:] * fac[1:]
    if n % 2 == 0:
        out[..., -1] = 0.0  # Nyquist mode has no grid-representable antiderivative
    return np.fft.irfft(out, n=n, axis=-1)


def rotate(sys: SystemSpec) -> RotatingField:
    """Pass to the frame co-rotating with the resonant drive."""
    return RotatingField(system=sys)


def _check_finite(name: str, arr: np.ndarray, r, psi):
    if np.all(np.isfinite(arr)):
        return
    idx = np.argwhere(~np.isfinite(arr))
    first = tuple(idx[0])
    rr = np.broadcast_to(np.asarray(r, float)[..., None], arr.shape)[first]
    pp = np.broadcast_to(np.asarray(psi, float)[..., None], arr.shape)[first]
    raise ValueError(
        f"non-finite {name} sample at node r={rr!r}, psi={pp!r}, "
        f"S-index {first[-1]}"
    )


def average_order1(rf: RotatingField, grid: QuadratureSpec = QuadratureSpec()) -> AveragedField:
    """Order-1 averaged coefficients by spectral quadrature over S."""
    S = _s_nodes(rf.s_period, grid.n_s)

    def amp(r, psi):
        r = np.asarray(r, float)
        psi = np.asarray(psi, float)
        vals = rf.F(1, r[..., None], psi[..., None], S)
        _check_finite("amplitude integrand", vals, r, psi)
        return vals.mean(axis=-1)

    def phase(r, psi):
        r = np.asarray(r, float)
        psi = np.asarray(psi, float)
        vals = rf.G(1, r[..., None], psi[..., None], S)
        _check_finite("phase integrand", vals, r, psi)
        return vals.mean(axis=-1)

    sys = rf.system
    return AveragedField(
        q=sys.q,
        r_max=sys.r_max,
        entries={1: AveragedEntry(amp=amp, phase=phase, source="quadrature")},
    )


def _column_solver(rf: RotatingField, grid: QuadratureSpec):
    """Build the (r, psi) -> S-columns solver shared by the order-2 pipeline."""
    S = _s_nodes(rf.s_period, grid.n_s)
    s0 = rf.system.drive.s0
    period = rf.s_period

    def columns(r, psi):
        r = np.asarray(r, float)
        psi = np.asarray(psi, float)
        F1 = rf.F(1, r[..., None], psi[..., None], S)
        G1 = rf.G(1, r[..., None], psi[..., None], S)
        lam1 = F1.mean(axis=-1)
        om1 = G1.mean(axis=-1)
        rhs_u = lam1[..., None] - F1
        rhs_v = om1[..., None] - G1
        mu = np.abs(rhs_u.mean(axis=-1)).max() if rhs_u.size else 0.0
        mv = np.abs(rhs_v.mean(axis=-1)).max() if rhs_v.size else 0.0
        if max(mu, mv) > MEAN_TOL:
            raise InconsistentAveragingError(
                f"homological right-hand side has S-mean {max(mu, mv):.3e}"
            )
        u1 = _mean_free_antiderivative(rhs_u, period, s0)
        v1 = _mean_free_antiderivative(rhs_v, period, s0)
        return {
            "S": S,
            "F1": F1,
            "G1": G1,
            "lam1": lam1,
            "om1": om1,
            "u1": u1,
            "v1": v1,
            "dSu1": rhs_u / s0,
            "dSv1": rhs_v / s0,
        }

    return columns


def solve_homological_order1(
    rf: RotatingField,
    avg1: AveragedField,
    grid: QuadratureSpec = QuadratureSpec(),
    r_grid: np.ndarray | None = None,
    psi_grid: np.ndarray | None = None,
) -> HomologicalSolution:
    """Zero-mean periodic u1, v1 with s0 * dS(u1, v1) = (Lambda1 - F1, Omega1 - G1).

    Materializes the solution on an (R, Psi, S) tensor grid and carries the
    on-demand column solver used downstream.
    """
    if 1 not in avg1.entries:
        raise ValueError("order-1 averaged field required")
    sys = rf.system
    if r_grid is None:
        r_grid = np.linspace(0.1 * sys.r_max, 0.95 * sys.r_max, 24)
    if psi_grid is None:
        psi_grid = TWO_PI * np.arange(48) / 48 - math.pi
    columns = _column_solver(rf, grid)
    rr, pp = np.meshgrid(r_grid, psi_grid, indexing="ij")
    cols = columns(rr, pp)
    return HomologicalSolution(
        r_grid=np.asarray(r_grid, float),
        psi_grid=np.asarray(psi_grid, float),
        n_s=grid.n_s,
        s_grid=cols["S"],
        u1=cols["u1"],
        v1=cols["v1"],
        columns=columns,
    )


def average_order2(
    rf: RotatingField,
    hom: HomologicalSolution,
    avg1: AveragedField,
    drive: DrivePhase,
    grid: QuadratureSpec = QuadratureSpec(),
    probe_accuracy: bool = True,
) -> AveragedField:
    """Order-2 averaged coefficients.

    Builds the order-2 correction terms from the order-1 data (advection of
    u1, v1 by the order-1 field, the drive correction s_1 dS, the extra
    u_{2-q} term when q = 1, and the transport of Lambda1/Omega1 by u1, v1),
    then averages F2/G2 minus those corrections over S.
    """
    columns = hom.columns
    S = _s_nodes(rf.s_period, grid.n_s)
    q = drive.q
    s1d = drive.coeff(1)
    prev_coef = (2.0 - q) / q if q == 1 else 0.0
    h = grid.fd_step

    def _both(r, psi):
        r = np.asarray(r, float)
        psi = np.asarray(psi, float)
        shape = np.broadcast(r, psi).shape
        r, psi = np.broadcast_to(r, shape).ravel(), np.broadcast_to(psi, shape).ravel()

        c0 = columns(r, psi)
        hr = h * np.maximum(1.0, np.abs(r))
        # 4th-order central stencils in r and psi at the query points
        du_r = 0.0
        dv_r = 0.0
        dlam_r = 0.0
        dom_r = 0.0
        for off, w in zip(_FD_OFFSETS, _FD_WEIGHTS):
            c = columns(r + off * hr, psi)
            du_r = du_r + w * c["u1"]
            dv_r = dv_r + w * c["v1"]
            dlam_r = dlam_r + w * c["lam1"]
            dom_r = dom_r + w * c["om1"]
        du_r /= hr[..., None]
        dv_r /= hr[..., None]
        dlam_r /= hr
        dom_r /= hr

        du_p = 0.0
        dv_p = 0.0
        dlam_p = 0.0
        dom_p = 0.0
        for off, w in zip(_FD_OFFSETS, _FD_WEIGHTS):
            c = columns(r, psi + off * h)
            du_p = du_p + w * c["u1"]
            dv_p = dv_p + w * c["v1"]
            dlam_p = dlam_p + w * c["lam1"]
            dom_p = dom_p + w * c["om1"]
        du_p /= h
        dv_p /= h
        dlam_p /= h
        dom_p /= h

        F2 = rf.F(2, r[..., None], psi[..., None], S)
        G2 = rf.G(2, r[..., None], psi[..., None], S)

        F1, G1 = c0["F1"], c0["G1"]
        u1, v1 = c0["u1"], c0["v1"]
        F2t = (
            -(F1 * du_r + G1 * du_p + s1d * c0["dSu1"])
            + prev_coef * u1
            + u1 * dlam_r[..., None]
            + v1 * dlam_p[..., None]
        )
        G2t = (
            -(F1 * dv_r + G1 * dv_p + s1d * c0["dSv1"])
            + prev_coef * v1
            + u1 * dom_r[..., None]
            + v1 * dom_p[..., None]
        )
        lam2 = (F2 - F2t).mean(axis=-1)
        om2 = (G2 - G2t).mean(axis=-1)
        return lam2.reshape(shape), om2.reshape(shape)

    def amp(r, psi):
        return _both(r, psi)[0]

    def phase(r, psi):
        return _both(r, psi)[1]

    fd_warning = False
    if probe_accuracy:
        fd_warning = _richardson_warning(_both, rf, hom, avg1, drive, grid)
    entry = AveragedEntry(
        amp=amp, phase=phase, source="quadrature", fd_warning=fd_warning
    )
    return avg1.with_entry(2, entry)


def _richardson_warning(both, rf, hom, avg1, drive, grid: QuadratureSpec) -> bool:
    """Probe the finite-difference error by halving the step at test points."""
    r = np.array([0.35 * rf.system.r_max, 0.6 * rf.system.r_max])
    psi = np.array([0.4, -1.9])
    try:
        a1, p1 = both(r, psi)
    except Exception:
        return True
    half = QuadratureSpec(n_s=grid.n_s, fd_step=grid.fd_step / 2)
    avg2_h = average_order2(rf, hom, avg1, drive, half, probe_accuracy=False)
    a2 = avg2_h.amp(2, r, psi)
    p2 = avg2_h.phase(2, r, psi)
    scale = 1.0 + max(np.max(np.abs(a1)), np.max(np.abs(p1)))
    err = max(np.max(np.abs(a1 - a2)), np.max(np.abs(p1 - p2)))
    return bool(err > 1e-7 * scale)


def detect_leading_indices(
    avg: AveragedField,
    null_tol: float = NULL_TOL,
    n_r: int = 16,
    n_psi: int = 24,
) -> tuple[int, int]:
    """Smallest orders n, m with nonvanishing amplitude/phase coefficients."""
    r = np.linspace(0.1 * avg.r_max, 0.9 * avg.r_max, n_r)
    psi = TWO_PI * np.arange(n_psi) / n_psi - math.pi
    rr, pp = np.meshgrid(r, psi, indexing="ij")
    n = m = None
    for k in sorted(avg.entries):
        if n is None and np.max(np.abs(avg.amp(k, rr, pp))) >= null_tol:
            n = k
        if m is None and np.max(np.abs(avg.phase(k, rr, pp))) >= null_tol:
            m = k
    if n is None or m is None:
        raise IndeterminateOrderError(
            f"no nonvanishing {'amplitude' if n is None else 'phase'} "
            f"coefficient up to order {avg.max_order()}"
        )
    return n, m


def export_grid_csv(
    avg: AveragedField, k: int, r_grid, psi_grid, path
) -> None:
    """Dump one order of the averaged field as `r,psi,lambda_k,omega_k` rows."""
    rr, pp = np.meshgrid(np.asarray(r_grid, float), np.asarray(psi_grid, float), indexing="ij")
    lam = avg.amp(k, rr, pp)
    om = avg.phase(k, rr, pp)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"r,psi,lambda_{k},omega_{k}\n")
        for i in range(rr.shape[0]):
            for j in range(rr.shape[1]):
                fh.write(
                    f"{rr[i, j]:.17g},{pp[i, j]:.17g},"
                    f"{lam[i, j]:.17g},{om[i, j]:.17g}\n"
                )
