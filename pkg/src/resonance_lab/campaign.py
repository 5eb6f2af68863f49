"""Ensemble simulation, empirical regime detection, and comparison of the
simulated dynamics with the averaged-theory prediction.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import analysis, averaging, bench, series
from .integrate import IntegratorConfig, TrajectoryRecord, integrate
from .model import CartesianState, NoResonance, ResonanceData, SystemSpec

TWO_PI = 2.0 * math.pi

STEADY_AMPLITUDE = "steady-amplitude"
LOG_GROWTH = "log-growth"
PHASE_LOCKED = "phase-locked"
PHASE_DRIFTING = "phase-drifting"
ESCAPED = "escaped"
UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class DetectorConfig:
    """Thresholds for the empirical regime detectors.

    Defaults are calibrated so the six figure-parameter campaigns classify
    unambiguously at t_end = 1e5; everything is overridable from configs.
    """

    slope_tol: float = 1e-5
    var_tol: float = 1e-3
    log_slope_rel: float = 0.10
    log_slope_min: float = 0.05
    lock_tv: float = 0.2
    drift_min_shift: float = 4.0 * math.pi
    drift_monotone: float = 0.9
    smooth_harmonics: int = 4
    smooth_window_periods: int = 4
    smooth_centers: int = 220


@dataclass(frozen=True)
class CampaignConfig:
    family: str
    params: dict = field(default_factory=dict)
    inits: tuple[tuple[float, float], ...] = ()  # explicit (rho, theta) pairs
    ball_center: tuple[float, float] | None = None
    ball_radius: float = 0.0
    ball_count: int = 0
    seed: int = 0
    integrator: IntegratorConfig = IntegratorConfig(t_end=1e5)
    detector: DetectorConfig = DetectorConfig()
    t_containment: float = 10.0  # start of the containment check
    epsilon: float = 0.3  # containment radius
    compare_theory: bool = True

    def initial_points(self) -> list[tuple[float, float]]:
        pts = list(self.inits)
        if self.ball_center is not None and self.ball_count > 0:
            rng = np.random.default_rng(self.seed)
            r = self.ball_radius * np.sqrt(rng.uniform(0, 1, self.ball_count))
            ang = rng.uniform(0, TWO_PI, self.ball_count)
            for rr, aa in zip(r, ang):
                pts.append(
                    (
                        self.ball_center[0] + rr * math.cos(aa),
                        self.ball_center[1] + rr * math.sin(aa),
                    )
                )
        return pts

    def canonical(self) -> dict:
        d = {
            "family": self.family,
            "params": {k: self.params[k] for k in sorted(self.params)},
            "inits": [list(p) for p in self.inits],
            "ball_center": list(self.ball_center) if self.ball_center else None,
            "ball_radius": self.ball_radius,
            "ball_count": self.ball_count,
            "seed": self.seed,
            "integrator": asdict(self.integrator),
            "detector": asdict(self.detector),
            "t_containment": self.t_containment,
            "epsilon": self.epsilon,
            "compare_theory": self.compare_theory,
        }
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class RegimeObservation:
    amplitude_kind: str
    phase_kind: str
    rho_infinity: float | None
    tail_slope: float
    log_slope: float | None
    theta_infinity: float | None
    theta_shift: float
    winding_rate_sign: int
    exit_time: float | None

    def to_dict(self) -> dict:
        return {
            "amplitude_kind": self.amplitude_kind,
            "phase_kind": self.phase_kind,
            "rho_infinity": self.rho_infinity,
            "tail_slope": self.tail_slope,
            "log_slope": self.log_slope,
            "theta_infinity": self.theta_infinity,
            "theta_shift": self.theta_shift,
            "winding_rate_sign": self.winding_rate_sign,
            "exit_time": self.exit_time,
        }


def initial_cartesian(
    sys: SystemSpec, rho: float, theta: float, t_start: float
) -> CartesianState:
    """Initial Cartesian state from rotating-frame coordinates (rho, theta).

    Off resonance the rotating frame is undefined and theta is taken as the
    raw oscillator phase.
    """
    if isinstance(sys.resonance, ResonanceData):
        phi = theta + sys.resonance.ratio * float(sys.drive.S(t_start))
    else:
        phi = theta
    return CartesianState(
        x1=rho * math.cos(phi), x2=-rho * math.sin(phi), t=t_start
    )


def _smoothed_theta(rec: TrajectoryRecord, sys: SystemSpec, det: DetectorConfig):
    t0, t1 = rec.t[0], rec.t[-1]
    if isinstance(sys.resonance, ResonanceData):
        period = TWO_PI * sys.resonance.varkappa
    else:
        period = TWO_PI * sys.drive.s0
    centers = np.geomspace(max(t0 * 1.02, t0 + 1e-9), t1 / 1.001, det.smooth_centers)
    used, means = series.harmonic_window_means(
        rec.t,
        rec.theta,
        sys.drive.S,
        period,
        centers,
        window_periods=det.smooth_window_periods,
        n_harmonics=det.smooth_harmonics,
    )
    return used, means


def detect_regime(
    rec: TrajectoryRecord, sys: SystemSpec, det: DetectorConfig = DetectorConfig()
) -> RegimeObservation:
    """Classify one trajectory from its recorded series alone.

    The record must span at least two decades of time; the tail window is the
    last decade.  Amplitude verdicts use the raw series; phase verdicts use
    the drive-period smoothed phase shift.
    """
    if len(rec) < 16 or rec.t[-1] < 100 * rec.t[0]:
        raise ValueError("record must cover at least two decades of time")
    t_end = rec.t[-1]
    tail = rec.t >= t_end / 10.0
    t_tail = rec.t[tail]
    rho_tail = rec.rho[tail]

    exit_time = rec.exit_time
    if exit_time is not None:
        return RegimeObservation(
            amplitude_kind=ESCAPED,
            phase_kind=ESCAPED,
            rho_infinity=None,
            tail_slope=math.nan,
            log_slope=None,
            theta_infinity=None,
            theta_shift=math.nan,
            winding_rate_sign=0,
            exit_time=exit_time,
        )

    # amplitude verdict
    tail_slope = series.fit_slope(t_tail, rho_tail)
    rho_var = float(np.var(rho_tail))
    win_a = (rec.t >= t_end / 100.0) & (rec.t < t_end / 10.0)
    win_b = tail
    log_slope = None
    amplitude_kind = UNDETERMINED
    if np.count_nonzero(win_a) > 8 and np.count_nonzero(win_b) > 8:
        m_a = series.fit_slope_vs_log(rec.t[win_a], rec.rho[win_a])
        m_b = series.fit_slope_vs_log(rec.t[win_b], rec.rho[win_b])
        if (
            abs(m_b) > det.log_slope_min
            and abs(m_a - m_b) <= det.log_slope_rel * max(abs(m_a), abs(m_b))
        ):
            log_slope = series.fit_slope_vs_log(
                rec.t[win_a | win_b], rec.rho[win_a | win_b]
            )
            amplitude_kind = LOG_GROWTH
    rho_inf = None
    if amplitude_kind == UNDETERMINED and abs(tail_slope) < det.slope_tol and rho_var < det.var_tol:
        amplitude_kind = STEADY_AMPLITUDE
        rho_inf = float(np.median(rho_tail))

    # phase verdict on the smoothed shift
    ts, th = _smoothed_theta(rec, sys, det)
    tail_s = ts >= t_end / 10.0
    th_tail = th[tail_s]
    phase_kind = UNDETERMINED
    theta_inf = None
    theta_shift = float(th[-1] - th[0]) if len(th) else math.nan
    wind_sign = 0
    if len(th_tail) > 4:
        tv = series.total_variation(th_tail)
        dth = np.diff(th)
        span = abs(th[-1] - np.interp(t_end / 10.0, ts, th))
        if tv < det.lock_tv:
            phase_kind = PHASE_LOCKED
            theta_inf = float(np.median(th_tail))
        elif span > det.drift_min_shift:
            direction = np.sign(th[-1] - th[0])
            agree = np.count_nonzero(np.sign(dth) == direction) / max(1, len(dth))
            if agree >= det.drift_monotone:
                phase_kind = PHASE_DRIFTING
                wind_sign = int(direction)
    return RegimeObservation(
        amplitude_kind=amplitude_kind,
        phase_kind=phase_kind,
        rho_infinity=rho_inf,
        tail_slope=float(tail_slope),
        log_slope=None if log_slope is None else float(log_slope),
        theta_infinity=theta_inf,
        theta_shift=theta_shift,
        winding_rate_sign=wind_sign,
        exit_time=None,
    )


def theory_prediction(fam: bench.BenchFamily) -> dict:
    """Averaged-theory regime for a family via the numeric pipeline."""
    sys = fam.system
    if isinstance(sys.resonance, NoResonance):
        return {"kind": analysis.NO_RESONANCE, "basis": "irrational frequency ratio"}
    rf = averaging.rotate(sys)
    grid = averaging.QuadratureSpec()
    avg = averaging.average_order1(rf, grid)
    hom = averaging.solve_homological_order1(rf, avg, grid)
    avg = averaging.average_order2(rf, hom, avg, sys.drive, grid, probe_accuracy=False)
    n, m = averaging.detect_leading_indices(avg)
    drifts = analysis.detect_drift(avg, n, m)
    for rep in drifts:
        if rep.kind != analysis.INCONCLUSIVE:
            return {
                "kind": rep.kind,
                "basis": rep.basis,
                "rho_star": rep.rho_star,
                "n": n,
                "m": m,
            }
    fps = analysis.find_fixed_points(avg, n, m)
    best = None
    for fp in fps:
        cls = analysis.classify(fp, sys.q)
        if cls.kind == analysis.PHASE_LOCKED_STABLE:
            return {
                "kind": cls.kind,
                "basis": cls.basis,
                "rho_star": fp.rho_star,
                "phi_star": fp.phi_star,
                "n": n,
                "m": m,
            }
        if best is None:
            best = {
                "kind": cls.kind,
                "basis": cls.basis,
                "rho_star": fp.rho_star,
                "phi_star": fp.phi_star,
                "n": n,
                "m": m,
            }
    return best or {"kind": analysis.INCONCLUSIVE, "basis": "no fixed points found"}


@dataclass(frozen=True)
class CampaignResult:
    config_hash: str
    observations: list
    records: list
    prediction: dict | None
    containment_fraction: float | None
    summary: dict


def run_campaign(cfg: CampaignConfig, out_dir: str | None = None) -> CampaignResult:
    """Integrate the ensemble, detect regimes, and compare with theory.

    When ``out_dir`` is given, per-trajectory CSVs and the summary live in a
    subdirectory named by the config hash.
    """
    fam = bench.build(cfg.family, cfg.params)
    sys = fam.system
    pts = cfg.initial_points()
    records: list[TrajectoryRecord | None] = []
    observations: list[RegimeObservation | None] = []
    errors: list[str | None] = []
    for rho0, th0 in pts:
        st = initial_cartesian(sys, rho0, th0, cfg.integrator.t_start)
        try:
            rec = integrate(sys, st, cfg.integrator)
            obs = detect_regime(rec, sys, cfg.detector)
            records.append(rec)
            observations.append(obs)
            errors.append(None)
        except Exception as exc:  # recorded per trajectory, not fatal
            records.append(None)
            observations.append(None)
            errors.append(f"{type(exc).__name__}: {exc}")

    prediction = theory_prediction(fam) if cfg.compare_theory else None

    containment = None
    if prediction and prediction.get("rho_star") is not None:
        rho_ref = prediction["rho_star"]
        phi_ref = prediction.get("phi_star")
        drifting = prediction["kind"] in (
            analysis.PHASE_DRIFT_STABLE,
            analysis.PHASE_DRIFT_UNSTABLE,
        )
        inside = 0
        total = 0
        for rec in records:
            if rec is None:
                continue
            total += 1
            mask = rec.t >= cfg.t_containment
            if drifting or phi_ref is None:
                dist = np.abs(rec.rho[mask] - rho_ref)
            else:
                dist = np.abs(rec.rho[mask] - rho_ref) + np.abs(
                    rec.theta[mask] - phi_ref
                )
            if rec.exit_time is None and np.all(dist < cfg.epsilon):
                inside += 1
        containment = inside / total if total else None

    counts: dict[str, int] = {}
    for obs in observations:
        key = "error" if obs is None else f"{obs.amplitude_kind}+{obs.phase_kind}"
        counts[key] = counts.get(key, 0) + 1
    summary = {
        "config_hash": cfg.config_hash(),
        "n_trajectories": len(pts),
        "verdicts": {k: counts[k] for k in sorted(counts)},
        "errors": [e for e in errors if e],
        "prediction": prediction,
        "containment_fraction": containment,
        "epsilon": cfg.epsilon,
        "t_containment": cfg.t_containment,
        "observations": [o.to_dict() if o else None for o in observations],
    }

    if out_dir is not None:
        run_dir = os.path.join(out_dir, cfg.config_hash())
        os.makedirs(run_dir, exist_ok=True)
        for i, rec in enumerate(records):
            if rec is not None:
                rec.to_csv(os.path.join(run_dir, f"trajectory_{i:03d}.csv"))
        with open(os.path.join(run_dir, "summary.json"), "w", encoding="ascii") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")

    return CampaignResult(
        config_hash=cfg.config_hash(),
        observations=observations,
        records=records,
        prediction=prediction,
        containment_fraction=containment,
        summary=summary,
    )
