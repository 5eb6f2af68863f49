"""Resonant fixed points of the averaged system, stability parameters and
regime classification, phase-drift detection, first asymptotic correction,
and a numerical Lyapunov-form monitor for simulated trajectories.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import series
from .averaging import NULL_TOL, AveragedField
from .integrate import TrajectoryRecord
from .model import DrivePhase, ResonanceData, wrap_angle

TWO_PI = 2.0 * math.pi

FP_TOL = 1e-10
DEGENERATE_TOL = 1e-8
DEFECTIVE_TOL = 1e-10
#: finite-difference step scale for Jacobian entries at a fixed point
JAC_STEP = 1e-5
#: finite-difference step scale inside the Newton iteration
NEWTON_STEP = 1e-6
NEWTON_MAX_ITER = 50
DEDUP_TOL = 1e-7

PHASE_LOCKED_STABLE = "phase-locked-stable"
PHASE_LOCKED_UNSTABLE = "phase-locked-unstable"
PHASE_DRIFT_STABLE = "phase-drift-stable"
PHASE_DRIFT_UNSTABLE = "phase-drift-unstable"
DEGENERATE = "degenerate"
INCONCLUSIVE = "inconclusive"
NO_RESONANCE = "no-resonance"

_FD_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0])
_FD_WEIGHTS = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0


class DegenerateFixedPointError(ValueError):
    pass


class UnsupportedBranchError(ValueError):
    """Asymptotics in the logarithmic branch are not implemented."""


class LyapunovConstructionError(ValueError):
    """C1 <= 0: inconsistent stability exponents for the quadratic form."""


@dataclass(frozen=True)
class FixedPointReport:
    rho_star: float
    phi_star: float
    n: int
    m: int
    q: int
    lambda_n: float
    nu_n: float
    eta_m: float
    omega_m: float
    det_D: float
    alpha1: complex
    alpha2: complex
    beta1: float
    beta2: float
    defective: bool
    degenerate: bool
    residual: float

    def jacobian(self) -> np.ndarray:
        return np.array(
            [[self.lambda_n, self.nu_n], [self.eta_m, self.omega_m]], dtype=float
        )

    def to_dict(self) -> dict:
        d = {
            "rho_star": self.rho_star,
            "phi_star": self.phi_star,
            "n": self.n,
            "m": self.m,
            "q": self.q,
            "lambda_n": self.lambda_n,
            "nu_n": self.nu_n,
            "eta_m": self.eta_m,
            "omega_m": self.omega_m,
            "det_D": self.det_D,
            "alpha1": [self.alpha1.real, self.alpha1.imag],
            "alpha2": [self.alpha2.real, self.alpha2.imag],
            "beta1": self.beta1,
            "beta2": self.beta2,
            "defective": self.defective,
            "degenerate": self.degenerate,
            "residual": self.residual,
        }
        return d


@dataclass(frozen=True)
class DriftReport:
    rho_star: float
    n: int
    m: int
    q: int
    ell_min: float
    ell_max: float
    omega_min_abs: float
    omega_sign: int
    lambda_sup: float
    kind: str
    basis: str

    def to_dict(self) -> dict:
        return {
            "rho_star": self.rho_star,
            "n": self.n,
            "m": self.m,
            "q": self.q,
            "ell_min": self.ell_min,
            "ell_max": self.ell_max,
            "omega_min_abs": self.omega_min_abs,
            "omega_sign": self.omega_sign,
            "lambda_sup": self.lambda_sup,
            "kind": self.kind,
            "basis": self.basis,
        }


@dataclass(frozen=True)
class RegimeClassification:
    kind: str
    basis: str
    predicted: dict

    def to_dict(self) -> dict:
        return {"kind": self.kind, "basis": self.basis, "predicted": self.predicted}


@dataclass(frozen=True)
class AsymptoticCorrection:
    xi1: float
    zeta1: float
    residual: float


@dataclass(frozen=True)
class LyapunovForm:
    C1: float
    C2: float
    exponent: float  # (m - n)/q weight on the middle term

    def value(self, y1, y2, t):
        return (
            self.C1 * y1**2
            + np.asarray(t, float) ** self.exponent * y2**2
            + self.C2 * y1 * y2
        )


@dataclass(frozen=True)
class LyapunovMonitorReport:
    fraction_nonincreasing: float
    first_monotone_time: float
    n_pairs: int
    smoothed: bool


def fill_alpha_beta(
    lam: float, nu: float, eta: float, om: float, n: int, m: int, q: int
):
    """Effective eigenvalues and decay-corrected exponents of the linearization.

    Returns (alpha1, alpha2, beta1, beta2, det_D, defective).
    """
    det = lam * om - nu * eta
    defective = False
    if n == m:
        tr = lam + om
        disc = tr * tr - 4.0 * det
        if abs(disc) < DEFECTIVE_TOL:
            defective = True
            alpha1 = alpha2 = complex(0.5 * tr)
        else:
            root = cmath.sqrt(complex(disc))
            alpha1 = 0.5 * (tr + root)
            alpha2 = 0.5 * (tr - root)
        beta1, beta2 = alpha1.real, alpha2.real
    elif n < m:
        alpha1 = complex(lam)
        alpha2 = complex(det / lam) if lam != 0 else complex(math.inf)
        beta1 = alpha1.real + (n - m) / (2.0 * q) * (1.0 if n == q else 0.0)
        beta2 = alpha2.real + (m - n) / (2.0 * q) * (1.0 if m == q else 0.0)
    else:
        alpha1 = complex(det / om) if om != 0 else complex(math.inf)
        alpha2 = complex(om)
        beta1 = alpha1.real + (n - m) / (2.0 * q) * (1.0 if n == q else 0.0)
        beta2 = alpha2.real + (m - n) / (2.0 * q) * (1.0 if m == q else 0.0)
    return alpha1, alpha2, beta1, beta2, det, defective


def _fd_derivs(fn: Callable, r: float, psi: float, step_scale: float = JAC_STEP):
    """4th-order central derivatives (d/dr, d/dpsi) of a field at one point."""
    hr = step_scale * max(1.0, abs(r))
    hp = step_scale
    rs = r + _FD_OFFSETS * hr
    ps = np.full_like(rs, psi)
    dr = float(np.dot(_FD_WEIGHTS, fn(rs, ps)) / hr)
    ps = psi + _FD_OFFSETS * hp
    rs = np.full_like(ps, r)
    dp = float(np.dot(_FD_WEIGHTS, fn(rs, ps)) / hp)
    return dr, dp


def build_report(
    avg: AveragedField, n: int, m: int, rho: float, phi: float, residual: float
) -> FixedPointReport:
    """Fill all Jacobian-derived quantities at a located fixed point."""
    lam, nu = _fd_derivs(lambda r, p: avg.amp(n, r, p), rho, phi)
    eta, om = _fd_derivs(lambda r, p: avg.phase(m, r, p), rho, phi)
    alpha1, alpha2, beta1, beta2, det, defective = fill_alpha_beta(
        lam, nu, eta, om, n, m, avg.q
    )
    return FixedPointReport(
        rho_star=float(rho),
        phi_star=float(wrap_angle(phi)),
        n=n,
        m=m,
        q=avg.q,
        lambda_n=lam,
        nu_n=nu,
        eta_m=eta,
        omega_m=om,
        det_D=det,
        alpha1=alpha1,
        alpha2=alpha2,
        beta1=beta1,
        beta2=beta2,
        defective=defective,
        degenerate=bool(abs(det) < DEGENERATE_TOL),
        residual=float(residual),
    )


def find_fixed_points(
    avg: AveragedField,
    n: int,
    m: int,
    n_psi_seeds: int = 24,
    n_rho_seeds: int = 16,
    seed_offset: float = 0.0,
    fp_tol: float = FP_TOL,
    extra_seeds: Sequence[tuple[float, float]] = (),
) -> list[FixedPointReport]:
    """Newton search for joint zeros of (Lambda_n, Omega_m) from a seed grid."""
    r_max = avg.r_max
    rho_seeds = np.linspace(0.08 * r_max, 0.9 * r_max, n_rho_seeds)
    psi_seeds = wrap_angle(
        TWO_PI * np.arange(n_psi_seeds) / n_psi_seeds - math.pi + seed_offset
    )
    rr, pp = np.meshgrid(rho_seeds, psi_seeds, indexing="ij")
    pts = np.stack([rr.ravel(), pp.ravel()], axis=1)
    if extra_seeds:
        pts = np.vstack([pts, np.asarray(extra_seeds, dtype=float)])

    def F(r, p):
        return avg.amp(n, r, p), avg.phase(m, r, p)

    x = pts.copy()
    active = np.ones(len(x), dtype=bool)
    converged = np.zeros(len(x), dtype=bool)
    for _ in range(NEWTON_MAX_ITER):
        if not active.any():
            break
        r, p = x[active, 0], x[active, 1]
        fr, fp_ = F(r, p)
        res = np.hypot(fr, fp_)
        done = res < fp_tol
        idx_active = np.flatnonzero(active)
        converged[idx_active[done]] = True
        active[idx_active[done]] = False
        still = idx_active[~done]
        if len(still) == 0:
            break
        r, p = x[still, 0], x[still, 1]
        hr = NEWTON_STEP * np.maximum(1.0, np.abs(r))
        hp = NEWTON_STEP
        a11 = (avg.amp(n, r + hr, p) - avg.amp(n, r - hr, p)) / (2 * hr)
        a12 = (avg.amp(n, r, p + hp) - avg.amp(n, r, p - hp)) / (2 * hp)
        a21 = (avg.phase(m, r + hr, p) - avg.phase(m, r - hr, p)) / (2 * hr)
        a22 = (avg.phase(m, r, p + hp) - avg.phase(m, r, p - hp)) / (2 * hp)
        det = a11 * a22 - a12 * a21
        fr, fp_ = F(r, p)
        with np.errstate(divide="ignore", invalid="ignore"):
            dr = -(a22 * fr - a12 * fp_) / det
            dp = -(-a21 * fr + a11 * fp_) / det
        bad = ~np.isfinite(dr) | ~np.isfinite(dp)
        # damp oversized steps; drop exploding seeds
        step = np.hypot(dr, dp)
        scale = np.minimum(1.0, 0.5 / np.maximum(step, 1e-300))
        dr, dp = dr * scale, dp * scale
        x[still, 0] = r + np.where(bad, np.nan, dr)
        x[still, 1] = p + np.where(bad, np.nan, dp)
        out = bad | ~np.isfinite(x[still, 0]) | (x[still, 0] <= 0) | (
            x[still, 0] >= 1.5 * r_max
        )
        active[still[out]] = False

    reports: list[FixedPointReport] = []
    found: list[tuple[float, float]] = []
    for i in np.flatnonzero(converged):
        rho, phi = float(x[i, 0]), float(x[i, 1])
        if not (0.0 < rho < r_max):
            continue
        phi = float(wrap_angle(phi))
        dup = False
        for rho0, phi0 in found:
            dphi = abs(wrap_angle(phi - phi0))
            if abs(rho - rho0) < max(DEDUP_TOL, 1e-8 * max(1, abs(rho0))) and (
                dphi < 1e-6 or abs(dphi - TWO_PI) < 1e-6
            ):
                dup = True
                break
        if dup:
            continue
        found.append((rho, phi))
        fr, fp_ = F(np.array([rho]), np.array([phi]))
        residual = float(np.hypot(fr, fp_)[0])
        reports.append(build_report(avg, n, m, rho, phi, residual))
    reports.sort(key=lambda rep: (rep.rho_star, rep.phi_star))
    return reports


def classify(fp: FixedPointReport, q: int) -> RegimeClassification:
    """Stability of a resonant lock per the sign table of the linearization."""
    predicted = {"rho_star": fp.rho_star, "phi_star": fp.phi_star}
    if fp.degenerate:
        return RegimeClassification(
            kind=DEGENERATE,
            basis="|det D| below degeneracy tolerance; theory excludes this case",
            predicted=predicted,
        )
    n, m = fp.n, fp.m
    if n == m:
        re1, re2 = fp.alpha1.real, fp.alpha2.real
        if fp.defective:
            a0 = re1
            if a0 < 0:
                return RegimeClassification(
                    kind=PHASE_LOCKED_STABLE,
                    basis="equal orders, defective linearization, double exponent < 0",
                    predicted=predicted,
                )
            if a0 > 0:
                return RegimeClassification(
                    kind=PHASE_LOCKED_UNSTABLE,
                    basis="equal orders, defective linearization, double exponent > 0",
                    predicted=predicted,
                )
            return RegimeClassification(
                kind=INCONCLUSIVE, basis="zero double exponent", predicted=predicted
            )
        if re1 < 0 and re2 < 0:
            return RegimeClassification(
                kind=PHASE_LOCKED_STABLE,
                basis="equal orders, both effective exponents negative",
                predicted=predicted,
            )
        if re1 > 0 or re2 > 0:
            full = fp.beta1 > 0 and fp.beta2 > 0 and max(n, m) < q
            note = (
                "full-system escape certified (both exponents positive, max(n,m) < q)"
                if full
                else "limiting-system instability; full-system escape clause not applicable"
            )
            return RegimeClassification(
                kind=PHASE_LOCKED_UNSTABLE,
                basis="equal orders, positive effective exponent; " + note,
                predicted=predicted,
            )
        return RegimeClassification(
            kind=INCONCLUSIVE,
            basis="equal orders with a zero real part",
            predicted=predicted,
        )
    # distinct leading orders
    if fp.beta1 < 0 and fp.beta2 < 0:
        return RegimeClassification(
            kind=PHASE_LOCKED_STABLE,
            basis="distinct orders, both decay-corrected exponents negative",
            predicted=predicted,
        )
    if fp.alpha1.real > 0 and fp.alpha2.real > 0 and max(n, m) < q:
        return RegimeClassification(
            kind=PHASE_LOCKED_UNSTABLE,
            basis="distinct orders, both exponents positive and max(n,m) < q",
            predicted=predicted,
        )
    return RegimeClassification(
        kind=INCONCLUSIVE,
        basis="mixed or boundary exponent signs with distinct orders",
        predicted=predicted,
    )


def detect_drift(
    avg: AveragedField,
    n: int,
    m: int,
    rho_candidates: Sequence[float] = (),
    n_psi: int = 256,
    null_tol: float = NULL_TOL,
) -> list[DriftReport]:
    """Amplitudes where Lambda_n vanishes identically in psi (drift circles).

    Candidates come from 1-D root finding on the psi-averaged Lambda_n plus
    user seeds; each is verified on a psi-grid, then the radial exponent
    ell(psi) and the phase velocity Omega_m are checked for definite sign.
    """
    psi = TWO_PI * np.arange(n_psi) / n_psi - math.pi
    r_grid = np.linspace(0.05 * avg.r_max, 0.95 * avg.r_max, 96)

    def mean_amp(r):
        rr = np.broadcast_to(np.asarray(r, float)[..., None], (np.size(r), n_psi))
        return avg.amp(n, rr, psi[None, :]).mean(axis=-1)

    vals = mean_amp(r_grid)
    candidates = list(rho_candidates)
    sign = np.sign(vals)
    for i in np.flatnonzero(sign[:-1] * sign[1:] < 0):
        lo, hi = r_grid[i], r_grid[i + 1]
        flo = vals[i]
        for _ in range(80):  # bisection on the psi-averaged amplitude
            mid = 0.5 * (lo + hi)
            fmid = float(mean_amp(np.array([mid]))[0])
            if flo * fmid <= 0:
                hi = mid
            else:
                lo, flo = mid, fmid
        candidates.append(0.5 * (lo + hi))

    reports = []
    for rho in candidates:
        rho = float(rho)
        lam_sup = float(np.max(np.abs(avg.amp(n, np.full(n_psi, rho), psi))))
        if lam_sup >= null_tol:
            continue
        hr = JAC_STEP * max(1.0, rho)
        ell = np.zeros(n_psi)
        for off, w in zip(_FD_OFFSETS, _FD_WEIGHTS):
            ell += w * avg.amp(n, np.full(n_psi, rho + off * hr), psi)
        ell /= hr
        om_vals = avg.phase(m, np.full(n_psi, rho), psi)
        omega_min_abs = float(np.min(np.abs(om_vals)))
        omega_sign = int(np.sign(om_vals[np.argmax(np.abs(om_vals))]))
        if np.min(om_vals) < 0 < np.max(om_vals):
            omega_min_abs = 0.0
            omega_sign = 0
        ell_min, ell_max = float(np.min(ell)), float(np.max(ell))
        if omega_min_abs <= 0:
            kind, basis = INCONCLUSIVE, "phase velocity changes sign on the circle"
        elif ell_max < 0:
            kind, basis = PHASE_DRIFT_STABLE, "radial exponent negative on the circle"
        elif ell_min > 0:
            kind, basis = (
                PHASE_DRIFT_UNSTABLE,
                "radial exponent positive on the circle",
            )
        else:
            kind, basis = INCONCLUSIVE, "radial exponent changes sign on the circle"
        reports.append(
            DriftReport(
                rho_star=rho,
                n=n,
                m=m,
                q=avg.q,
                ell_min=ell_min,
                ell_max=ell_max,
                omega_min_abs=omega_min_abs,
                omega_sign=omega_sign,
                lambda_sup=lam_sup,
                kind=kind,
                basis=basis,
            )
        )
    return reports


def asymptotic_correction(
    avg: AveragedField, fp: FixedPointReport
) -> AsymptoticCorrection:
    """First power-series correction of the slowly drifting lock state.

    Solves -A(rho*, phi*, 1) (xi1, zeta1)^T = (Lambda_{n+1}, Omega_{m+1}) at
    the fixed point (missing orders count as zero).  Only the power-series
    branch is supported; the logarithmic branch (m = q with n < m) is out of
    scope.
    """
    n, m, q = fp.n, fp.m, fp.q
    if n < m == q:
        raise UnsupportedBranchError(
            "logarithmic asymptotics (m = q with n < m) are not supported"
        )
    if fp.degenerate:
        raise DegenerateFixedPointError("correction undefined at a degenerate point")
    r = np.array([fp.rho_star])
    p = np.array([fp.phi_star])
    rhs1 = float(avg.amp(n + 1, r, p)[0]) if (n + 1) in avg.entries else 0.0
    rhs2 = float(avg.phase(m + 1, r, p)[0]) if (m + 1) in avg.entries else 0.0
    A = fp.jacobian()
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if abs(det) < DEGENERATE_TOL:
        raise DegenerateFixedPointError("singular linearization")
    xi1 = -(A[1, 1] * rhs1 - A[0, 1] * rhs2) / det
    zeta1 = -(-A[1, 0] * rhs1 + A[0, 0] * rhs2) / det
    res = np.hypot(
        -(A[0, 0] * xi1 + A[0, 1] * zeta1) - rhs1,
        -(A[1, 0] * xi1 + A[1, 1] * zeta1) - rhs2,
    )
    return AsymptoticCorrection(xi1=float(xi1), zeta1=float(zeta1), residual=float(res))


def lyapunov_form(fp: FixedPointReport, q: int) -> LyapunovForm:
    """Quadratic form certifying the stable lock, built from the exponents."""
    if not (fp.beta1 < 0 and fp.beta2 < 0):
        raise LyapunovConstructionError(
            "Lyapunov form requires both decay-corrected exponents negative"
        )
    n, m = fp.n, fp.m
    om_tilde = fp.omega_m + (m - n) / (2.0 * q) * (1.0 if m == q else 0.0)
    if fp.nu_n == 0.0:
        C1 = fp.lambda_n * om_tilde
    else:
        C1 = fp.lambda_n * fp.beta2 / (2.0 * fp.nu_n**2)
    if not C1 > 0:
        raise LyapunovConstructionError(f"C1 = {C1} is not positive")
    C2 = -(2.0 * C1 * fp.nu_n + 2.0 * fp.eta_m) / fp.lambda_n
    return LyapunovForm(C1=float(C1), C2=float(C2), exponent=(m - n) / q)


def lyapunov_monitor(
    fp: FixedPointReport,
    rec: TrajectoryRecord,
    q: int,
    drive: DrivePhase | None = None,
    resonance: ResonanceData | None = None,
    t_min: float = 100.0,
    tol_rel: float = 1e-9,
    smooth: bool = True,
) -> LyapunovMonitorReport:
    """Monotonicity of the Lyapunov form along a recorded trajectory.

    The form applies to the averaged variables; the recorded amplitude/phase
    carry the zero-mean drive-period oscillation of the near-identity
    transform, so by default the series are smoothed by windowed harmonic
    regression against the drive phase before differencing.
    """
    form = lyapunov_form(fp, q)
    mask = rec.t >= t_min
    t = rec.t[mask]
    if len(t) < 8:
        raise ValueError("trajectory too short beyond t_min")
    rho = rec.rho[mask]
    theta = rec.theta[mask]
    if smooth:
        if drive is None or resonance is None:
            raise ValueError("smoothing needs the drive and resonance data")
        period = TWO_PI * resonance.varkappa
        centers = np.geomspace(t[0] * 1.05, t[-1] / 1.05, 400)
        used, (rho_s, th_s) = series.harmonic_window_means(
            t, [rho, theta], drive.S, period, centers, window_periods=2, n_harmonics=4
        )
        t, rho, theta = used, rho_s, th_s
    y1 = rho - fp.rho_star
    y2 = theta - fp.phi_star
    L = form.value(y1, y2, t)
    frac, first = series.monotone_fraction(L, decreasing=True, tol_rel=tol_rel)
    return LyapunovMonitorReport(
        fraction_nonincreasing=frac,
        first_monotone_time=float(t[min(first, len(t) - 1)]),
        n_pairs=len(L) - 1,
        smoothed=smooth,
    )
