"""Time-series utilities for trajectory post-processing.

The recorded amplitude and phase shift carry a zero-mean oscillation at the
drive period (the footprint of the near-identity averaging transform), with
envelope decaying like the perturbation.  Windowed harmonic regression
against the known drive phase removes it, recovering the averaged variables
to the order of the dropped remainder; slope fits and winding checks then
operate on clean series.
"""
from __future__ import annotations

import math

import numpy as np

TWO_PI = 2.0 * math.pi


def fit_slope(x, y) -> float:
    """Least-squares slope of y against x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        raise ValueError("need at least two points for a slope fit")
    xm = x - x.mean()
    denom = np.dot(xm, xm)
    if denom == 0:
        raise ValueError("degenerate abscissa for slope fit")
    return float(np.dot(xm, y - y.mean()) / denom)


def fit_slope_vs_log(t, y) -> float:
    return fit_slope(np.log(t), y)


def fit_loglog_slope(t, y, floor: float = 1e-300) -> float:
    """Slope of log|y| vs log t; near-zero values are floored, not dropped."""
    y = np.maximum(np.abs(np.asarray(y, dtype=float)), floor)
    return fit_slope(np.log(t), np.log(y))


def total_variation(y) -> float:
    y = np.asarray(y, dtype=float)
    return float(np.sum(np.abs(np.diff(y)))) if len(y) > 1 else 0.0


def harmonic_window_means(
    t,
    values,
    s_of_t,
    s_period: float,
    centers,
    window_periods: int = 4,
    n_harmonics: int = 4,
):
    """Drive-aware windowed means of one or more series.

    For each window center, fits values ~ c0 + sum_j a_j cos(j*2*pi*S/P) +
    b_j sin(...) over samples within ``window_periods`` drive periods and
    keeps c0.  Returns (centers_used, list-of-mean-arrays).

    ``values`` may be a single array or a sequence of arrays sharing ``t``.
    """
    t = np.asarray(t, dtype=float)
    single = not isinstance(values, (list, tuple))
    cols = [np.asarray(values, dtype=float)] if single else [
        np.asarray(v, dtype=float) for v in values
    ]
    S_all = np.asarray(s_of_t(t), dtype=float)
    # window half-length in time units, via the mean drive rate dS/dt
    ds_dt = (S_all[-1] - S_all[0]) / (t[-1] - t[0])
    half = 0.5 * window_periods * s_period / ds_dt

    centers = np.asarray(centers, dtype=float)
    used = []
    means = [[] for _ in cols]
    n_basis = 1 + 2 * n_harmonics
    for tc in centers:
        i0, i1 = np.searchsorted(t, (tc - half, tc + half))
        if i1 - i0 < 2 * n_basis:
            continue
        Sw = S_all[i0:i1] * (TWO_PI / s_period)
        basis = np.empty((i1 - i0, n_basis))
        basis[:, 0] = 1.0
        for j in range(1, n_harmonics + 1):
            basis[:, 2 * j - 1] = np.cos(j * Sw)
            basis[:, 2 * j] = np.sin(j * Sw)
        rhs = np.stack([c[i0:i1] for c in cols], axis=1)
        coef, *_ = np.linalg.lstsq(basis, rhs, rcond=None)
        used.append(tc)
        for k in range(len(cols)):
            means[k].append(coef[0, k])
    used = np.asarray(used)
    out = [np.asarray(m) for m in means]
    return (used, out[0]) if single else (used, out)


def log_spaced_centers(t_lo: float, t_hi: float, count: int) -> np.ndarray:
    return np.geomspace(t_lo, t_hi, count)


def tail_residual_slope(
    t,
    values,
    reference,
    s_of_t,
    s_period: float,
    t_lo: float,
    t_hi: float,
    n_windows: int = 24,
    window_periods: int = 4,
    n_harmonics: int = 4,
) -> float:
    """Log-log decay slope of |smoothed(values) - reference| over [t_lo, t_hi].

    ``reference`` is a callable of t (the theoretical trend being tested).
    """
    centers = log_spaced_centers(t_lo, t_hi, n_windows)
    used, means = harmonic_window_means(
        t, values, s_of_t, s_period, centers, window_periods, n_harmonics
    )
    if len(used) < 4:
        raise ValueError("too few usable windows for a tail fit")
    resid = means - np.asarray(reference(used), dtype=float)
    return fit_loglog_slope(used, resid)


def monotone_fraction(values, decreasing: bool = True, tol_rel: float = 1e-9):
    """Fraction of consecutive pairs moving in the given direction.

    A pair counts as conforming when it decreases (resp. increases) within a
    relative tolerance.  Returns (fraction, first_index) where first_index is
    the earliest index after which the series is monotone to the end.
    """
    y = np.asarray(values, dtype=float)
    if len(y) < 2:
        return 1.0, 0
    dy = np.diff(y)
    sl = tol_rel * np.maximum(np.abs(y[:-1]), np.abs(y[1:]))
    good = dy <= sl if decreasing else dy >= -sl
    frac = float(np.count_nonzero(good)) / len(good)
    bad = np.flatnonzero(~good)
    first = 0 if len(bad) == 0 else int(bad[-1]) + 1
    return frac, first
