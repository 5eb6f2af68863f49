# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled Dormand-Prince 5(4) core for the built-in Cartesian families.

Twin of ``_stepper_py.step_loop`` with the family right-hand sides inlined;
the adaptive control, recording and phase unwrapping follow the same rules so
both backends agree to rounding.
"""
from libc.math cimport NAN, atan2, fabs, isfinite, log, pow, sin, sqrt

import numpy as np

FAMILY_IDS = {"ex1": 0, "ex2": 1, "ex3": 2}

STATUS_OK = 0
STATUS_EXIT = 1
STATUS_STIFF = 2

cdef double PI = 3.14159265358979323846

cdef double A21 = 1.0 / 5.0
cdef double A31 = 3.0 / 40.0, A32 = 9.0 / 40.0
cdef double A41 = 44.0 / 45.0, A42 = -56.0 / 15.0, A43 = 32.0 / 9.0
cdef double A51 = 19372.0 / 6561.0, A52 = -25360.0 / 2187.0
cdef double A53 = 64448.0 / 6561.0, A54 = -212.0 / 729.0
cdef double A61 = 9017.0 / 3168.0, A62 = -355.0 / 33.0
cdef double A63 = 46732.0 / 5247.0, A64 = 49.0 / 176.0, A65 = -5103.0 / 18656.0
cdef double B1 = 35.0 / 384.0, B3 = 500.0 / 1113.0, B4 = 125.0 / 192.0
cdef double B5 = -2187.0 / 6784.0, B6 = 11.0 / 84.0
cdef double E1 = 71.0 / 57600.0, E3 = -71.0 / 16695.0, E4 = 71.0 / 1920.0
cdef double E5 = -17253.0 / 339200.0, E6 = 22.0 / 525.0, E7 = -1.0 / 40.0
cdef double C2 = 1.0 / 5.0, C3 = 3.0 / 10.0, C4 = 4.0 / 5.0, C5 = 8.0 / 9.0

cdef double SAFETY = 0.9
cdef double FAC_MIN = 0.2
cdef double FAC_MAX = 5.0
cdef double STIFF_H_FLOOR = 1e-12


cdef inline void rhs(int family, double* p, double t, double u, double v,
                     double* du, double* dv):
    # u = x1, v = x2; dx1 = x2, dx2 = -x1 + decaying forcing
    cdef double S, P
    if family == 0:
        # params: a, b, c, s0, s1
        S = p[3] * t + p[4] * log(t)
        P = (p[0] + p[1] * v + p[2] * v * v) * sin(S) / t
    elif family == 1:
        # params: b0, b1, c0, c1, s1
        S = 2.0 * t + 2.0 * p[4] * sqrt(t)
        P = ((p[0] + p[1] * sin(S)) + (p[2] + p[3] * sin(S)) * v * v) * v / sqrt(t)
    else:
        # params: b0, b1, c0, s2
        S = 2.0 * t + p[3] * log(t)
        P = (p[0] + p[2] * v * v) * v / sqrt(t) + p[1] * v * sin(S) / t
    du[0] = v
    dv[0] = -u + P


def integrate_family(int family, double[::1] params, double t0, double u0,
                     double v0, double t_end, double rtol, double atol,
                     double h_init, double h_max, int stride):
    """Adaptive integration of one built-in family in Cartesian form."""
    cdef double t = t0, u = u0, v = v0
    cdef double h = h_init
    cdef double* p = &params[0]
    cdef double k1u, k1v, k2u, k2v, k3u, k3v, k4u, k4v, k5u, k5v, k6u, k6v
    cdef double k7u, k7v, u_new, v_new, err_u, err_v, sc_u, sc_v, err, factor
    cdef double phase, phi_raw, pnew, d
    cdef long n_steps = 0, n_rejected = 0
    cdef int accepted_since_record = 0
    cdef int status = 0
    cdef double t_exit = NAN
    cdef bint record

    if stride < 1:
        stride = 1
    if h > h_max:
        h = h_max
    if t + h > t_end:
        h = t_end - t

    phase = -atan2(v, u)
    phi_raw = phase

    cdef long cap = 8192, n = 0
    t_arr = np.empty(cap)
    u_arr = np.empty(cap)
    v_arr = np.empty(cap)
    ph_arr = np.empty(cap)
    cdef double[::1] tv = t_arr, uv = u_arr, vv = v_arr, pv = ph_arr
    tv[0] = t; uv[0] = u; vv[0] = v; pv[0] = phase
    n = 1

    rhs(family, p, t, u, v, &k1u, &k1v)

    while t < t_end:
        if h < STIFF_H_FLOOR * max(t, 1.0):
            status = 2  # stiffness: step size underflow
            break
        if t + h > t_end:
            h = t_end - t

        rhs(family, p, t + C2 * h, u + h * (A21 * k1u), v + h * (A21 * k1v),
            &k2u, &k2v)
        rhs(family, p, t + C3 * h,
            u + h * (A31 * k1u + A32 * k2u),
            v + h * (A31 * k1v + A32 * k2v), &k3u, &k3v)
        rhs(family, p, t + C4 * h,
            u + h * (A41 * k1u + A42 * k2u + A43 * k3u),
            v + h * (A41 * k1v + A42 * k2v + A43 * k3v), &k4u, &k4v)
        rhs(family, p, t + C5 * h,
            u + h * (A51 * k1u + A52 * k2u + A53 * k3u + A54 * k4u),
            v + h * (A51 * k1v + A52 * k2v + A53 * k3v + A54 * k4v), &k5u, &k5v)
        rhs(family, p, t + h,
            u + h * (A61 * k1u + A62 * k2u + A63 * k3u + A64 * k4u + A65 * k5u),
            v + h * (A61 * k1v + A62 * k2v + A63 * k3v + A64 * k4v + A65 * k5v),
            &k6u, &k6v)
        u_new = u + h * (B1 * k1u + B3 * k3u + B4 * k4u + B5 * k5u + B6 * k6u)
        v_new = v + h * (B1 * k1v + B3 * k3v + B4 * k4v + B5 * k5v + B6 * k6v)
        rhs(family, p, t + h, u_new, v_new, &k7u, &k7v)

        err_u = h * (E1 * k1u + E3 * k3u + E4 * k4u + E5 * k5u + E6 * k6u + E7 * k7u)
        err_v = h * (E1 * k1v + E3 * k3v + E4 * k4v + E5 * k5v + E6 * k6v + E7 * k7v)
        sc_u = atol + rtol * max(fabs(u), fabs(u_new))
        sc_v = atol + rtol * max(fabs(v), fabs(v_new))
        err = sqrt(0.5 * ((err_u / sc_u) ** 2 + (err_v / sc_v) ** 2))
        if not isfinite(err):
            n_rejected += 1
            h *= FAC_MIN
            continue

        if err <= 1.0:
            t += h
            u = u_new
            v = v_new
            k1u = k7u
            k1v = k7v
            n_steps += 1
            pnew = -atan2(v, u)
            d = pnew - phi_raw
            if d > PI:
                d -= 2.0 * PI
            elif d <= -PI:
                d += 2.0 * PI
            phase += d
            phi_raw = pnew
            accepted_since_record += 1
            record = accepted_since_record >= stride or t >= t_end
            if record:
                if n == cap:
                    cap *= 2
                    t_arr = np.resize(t_arr, cap)
                    u_arr = np.resize(u_arr, cap)
                    v_arr = np.resize(v_arr, cap)
                    ph_arr = np.resize(ph_arr, cap)
                    tv = t_arr; uv = u_arr; vv = v_arr; pv = ph_arr
                tv[n] = t; uv[n] = u; vv[n] = v; pv[n] = phase
                n += 1
                accepted_since_record = 0
            if err == 0.0:
                factor = FAC_MAX
            else:
                factor = SAFETY * pow(err, -0.2)
            h = min(h * min(FAC_MAX, max(FAC_MIN, factor)), h_max)
        else:
            n_rejected += 1
            factor = max(FAC_MIN, SAFETY * pow(err, -0.2))
            h *= min(1.0, factor)

    if tv[n - 1] != t:
        if n == cap:
            cap += 1
            t_arr = np.resize(t_arr, cap)
            u_arr = np.resize(u_arr, cap)
            v_arr = np.resize(v_arr, cap)
            ph_arr = np.resize(ph_arr, cap)
            tv = t_arr; uv = u_arr; vv = v_arr; pv = ph_arr
        tv[n] = t; uv[n] = u; vv[n] = v; pv[n] = phase
        n += 1

    return {
        "t": t_arr[:n].copy(),
        "u": u_arr[:n].copy(),
        "v": v_arr[:n].copy(),
        "phase": ph_arr[:n].copy(),
        "status": status,
        "t_exit": t_exit,
        "n_steps": n_steps,
        "n_rejected": n_rejected,
    }
