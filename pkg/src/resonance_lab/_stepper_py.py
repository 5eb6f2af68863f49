"""Adaptive Dormand-Prince 5(4) stepper, pure-Python backend.

This is the fallback twin of the compiled core in ``_stepper_cy.pyx``: same
tableau, same error control, same recording rules, so the two backends agree
to rounding on identical inputs.  The state is a 2-vector (u, v): Cartesian
(x1, x2) or polar (rho, phi).

Recording: every ``stride``-th accepted step plus the final point, columns
(t, u, v, phase) where phase is the unwrapped oscillator phase (computed per
accepted step in Cartesian mode, the v-component itself in polar mode).
"""
from __future__ import annotations

import math

import numpy as np

# Dormand-Prince 5(4) tableau
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# 5th-order minus embedded 4th-order weights (error estimate)
E1, E3, E4, E5, E6, E7 = (
    71 / 57600,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 5.0
STIFF_H_FLOOR = 1e-12  # relative to t

STATUS_OK = 0
STATUS_EXIT = 1
STATUS_STIFF = 2


def step_loop(
    f,
    t0: float,
    u0: float,
    v0: float,
    t_end: float,
    rtol: float,
    atol: float,
    h_init: float,
    h_max: float,
    stride: int,
    polar: bool,
    rho_floor: float,
    r_max: float,
):
    """Integrate du/dt, dv/dt = f(t, u, v) from t0 to t_end adaptively."""
    t, u, v = float(t0), float(u0), float(v0)
    h = min(float(h_init), float(h_max), t_end - t)
    stride = max(1, int(stride))

    if polar:
        phase = v
        phi_raw = 0.0
    else:
        phase = -math.atan2(v, u)
        phi_raw = phase

    ts, us, vs, phases = [t], [u], [v], [phase]
    status = STATUS_OK
    t_exit = math.nan
    n_steps = 0
    n_rejected = 0
    accepted_since_record = 0

    k1u, k1v = f(t, u, v)

    while t < t_end:
        if h < STIFF_H_FLOOR * max(t, 1.0):
            status = STATUS_STIFF
            break
        if t + h > t_end:
            h = t_end - t

        k2u, k2v = f(t + C2 * h, u + h * (A21 * k1u), v + h * (A21 * k1v))
        k3u, k3v = f(
            t + C3 * h,
            u + h * (A31 * k1u + A32 * k2u),
            v + h * (A31 * k1v + A32 * k2v),
        )
        k4u, k4v = f(
            t + C4 * h,
            u + h * (A41 * k1u + A42 * k2u + A43 * k3u),
            v + h * (A41 * k1v + A42 * k2v + A43 * k3v),
        )
        k5u, k5v = f(
            t + C5 * h,
            u + h * (A51 * k1u + A52 * k2u + A53 * k3u + A54 * k4u),
            v + h * (A51 * k1v + A52 * k2v + A53 * k3v + A54 * k4v),
        )
        k6u, k6v = f(
            t + h,
            u + h * (A61 * k1u + A62 * k2u + A63 * k3u + A64 * k4u + A65 * k5u),
            v + h * (A61 * k1v + A62 * k2v + A63 * k3v + A64 * k4v + A65 * k5v),
        )
        u_new = u + h * (B1 * k1u + B3 * k3u + B4 * k4u + B5 * k5u + B6 * k6u)
        v_new = v + h * (B1 * k1v + B3 * k3v + B4 * k4v + B5 * k5v + B6 * k6v)
        k7u, k7v = f(t + h, u_new, v_new)

        err_u = h * (E1 * k1u + E3 * k3u + E4 * k4u + E5 * k5u + E6 * k6u + E7 * k7u)
        err_v = h * (E1 * k1v + E3 * k3v + E4 * k4v + E5 * k5v + E6 * k6v + E7 * k7v)
        sc_u = atol + rtol * max(abs(u), abs(u_new))
        sc_v = atol + rtol * max(abs(v), abs(v_new))
        err = math.sqrt(0.5 * ((err_u / sc_u) ** 2 + (err_v / sc_v) ** 2))
        if not math.isfinite(err):
            n_rejected += 1
            h *= FAC_MIN
            continue

        if err <= 1.0:
            t += h
            u, v = u_new, v_new
            k1u, k1v = k7u, k7v  # FSAL
            n_steps += 1
            if polar:
                phase = v
            else:
                p = -math.atan2(v, u)
                d = p - phi_raw
                if d > math.pi:
                    d -= 2.0 * math.pi
                elif d <= -math.pi:
                    d += 2.0 * math.pi
                phase += d
                phi_raw = p
            accepted_since_record += 1
            record = accepted_since_record >= stride or t >= t_end
            if polar and not (rho_floor < u <= r_max):
                status = STATUS_EXIT
                t_exit = t
                record = True
            if record:
                ts.append(t)
                us.append(u)
                vs.append(v)
                phases.append(phase)
                accepted_since_record = 0
            if status == STATUS_EXIT:
                break
            factor = FAC_MAX if err == 0.0 else SAFETY * err**-0.2
            h = min(h * min(FAC_MAX, max(FAC_MIN, factor)), h_max)
        else:
            n_rejected += 1
            factor = max(FAC_MIN, SAFETY * err**-0.2)
            h *= min(1.0, factor)

    if ts[-1] != t:
        ts.append(t)
        us.append(u)
        vs.append(v)
        phases.append(phase)

    return {
        "t": np.asarray(ts),
        "u": np.asarray(us),
        "v": np.asarray(vs),
        "phase": np.asarray(phases),
        "status": status,
        "t_exit": t_exit,
        "n_steps": n_steps,
        "n_rejected": n_rejected,
    }
