"""Scalar per-node integration kernels (numba).

Time runs along ``u >= 0``; physical time is ``t0 + sgn * u`` and the state
obeys ``dx/du = sgn * f(x, t)``, so backward integration reuses the forward
code path. When ``with_ld`` is set the state carries one extra component
whose derivative is ``sum_k |f_k|^p``.
"""
from __future__ import annotations

import numpy as np

from ._accel import njit
from ._fields import field_nb

# Status codes shared with the numpy kernels.
RUNNING = -1
DONE = 0
ESCAPED = 1
FAILED = 2
SETTLED = 3

DOPRI5 = 0
RK4 = 1

EPS = 2.220446049250313e-16

# Dormand-Prince 5(4)
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                           49.0 / 176.0, -5103.0 / 18656.0)
B1, B3, B4, B5, B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
E1, E3, E4, E5, E6, E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                          -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 5.0


@njit(cache=True, nogil=True)
def _deriv(sid, prm, n, t0, sgn, p, with_ld, u, y, f, out):
    field_nb(sid, prm, t0 + sgn * u, y, f)
    acc = 0.0
    for k in range(n):
        out[k] = sgn * f[k]
        if with_ld:
            acc += abs(f[k]) ** p
    if with_ld:
        out[n] = acc


@njit(cache=True, nogil=True)
def _dopri_step(sid, prm, n, t0, sgn, p, with_ld, u, y, h, K, ytmp, f, ynew):
    """One DOPRI5 step from (u, y) with K[0] = y'(u); fills K[1..6], K[6] is
    the derivative at the new point (FSAL)."""
    m = y.shape[0]
    for i in range(m):
        ytmp[i] = y[i] + h * A21 * K[0, i]
    _deriv(sid, prm, n, t0, sgn, p, with_ld, u + C2 * h, ytmp, f, K[1])
    for i in range(m):
        ytmp[i] = y[i] + h * (A31 * K[0, i] + A32 * K[1, i])
    _deriv(sid, prm, n, t0, sgn, p, with_ld, u + C3 * h, ytmp, f, K[2])
    for i in range(m):
        ytmp[i] = y[i] + h * (A41 * K[0, i] + A42 * K[1, i] + A43 * K[2, i])
    _deriv(sid, prm, n, t0, sgn, p, with_ld, u + C4 * h, ytmp, f, K[3])
    for i in range(m):
        ytmp[i] = y[i] + h * (A51 * K[0, i] + A52 * K[1, i] + A53 * K[2, i]
                              + A54 * K[3, i])
    _deriv(sid, prm, n, t0, sgn, p, with_ld, u + C5 * h, ytmp, f, K[4])
    for i in range(m):
        ytmp[i] = y[i] + h * (A61 * K[0, i] + A62 * K[1, i] + A63 * K[2, i]
                              + A64 * K[3, i] + A65 * K[4, i])
    _deriv(sid, prm, n, t0, sgn, p, with_ld, u + h, ytmp, f, K[5])
    for i in range(m):
        ynew[i] = y[i] + h * (B1 * K[0, i] + B3 * K[2, i] + B4 * K[3, i]
                              + B5 * K[4, i] + B6 * K[5, i])
    _deriv(sid, prm, n, t0, sgn, p, with_ld, u + h, ynew, f, K[6])


@njit(cache=True, nogil=True)
def _dopri_err(y, ynew, K, h, rtol, atol):
    m = y.shape[0]
    acc = 0.0
    for i in range(m):
        e = h * (E1 * K[0, i] + E3 * K[2, i] + E4 * K[3, i] + E5 * K[4, i]
                 + E6 * K[5, i] + E7 * K[6, i])
        sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
        acc += (e / sc) ** 2
    return np.sqrt(acc / m)


@njit(cache=True, nogil=True)
def _rk4_step(sid, prm, n, t0, sgn, p, with_ld, u, y, h, K, ytmp, f, ynew):
    m = y.shape[0]
    for i in range(m):
        ytmp[i] = y[i] + 0.5 * h * K[0, i]
    _deriv(sid, prm, n, t0, sgn, p, with_ld, u + 0.5 * h, ytmp, f, K[1])
    for i in range(m):
        ytmp[i] = y[i] + 0.5 * h * K[1, i]
    _deriv(sid, prm, n, t0, sgn, p, with_ld, u + 0.5 * h, ytmp, f, K[2])
    for i in range(m):
        ytmp[i] = y[i] + h * K[2, i]
    _deriv(sid, prm, n, t0, sgn, p, with_ld, u + h, ytmp, f, K[3])
    for i in range(m):
        ynew[i] = y[i] + h / 6.0 * (K[0, i] + 2.0 * K[1, i] + 2.0 * K[2, i] + K[3, i])
    _deriv(sid, prm, n, t0, sgn, p, with_ld, u + h, ynew, f, K[6])


@njit(cache=True, nogil=True)
def _escape_gap(y, n, c, r):
    acc = 0.0
    for k in range(n):
        d = y[k] - c[k]
        acc += d * d
    return np.sqrt(acc) - r


@njit(cache=True, nogil=True)
def _in_target(y, n, tgt, tgt_r):
    for j in range(tgt.shape[0]):
        acc = 0.0
        for k in range(n):
            d = y[k] - tgt[j, k]
            acc += d * d
        if np.sqrt(acc) < tgt_r:
            return j
    return -1


@njit(cache=True, nogil=True)
def _all_finite(y):
    for i in range(y.shape[0]):
        if not np.isfinite(y[i]):
            return False
    return True


@njit(cache=True, nogil=True)
def _initial_step(sid, prm, n, t0, sgn, p, with_ld, y, K, ytmp, f, rtol, atol, hmax, span):
    m = y.shape[0]
    d0 = 0.0
    d1 = 0.0
    for i in range(m):
        sc = atol + rtol * abs(y[i])
        d0 += (y[i] / sc) ** 2
        d1 += (K[0, i] / sc) ** 2
    d0 = np.sqrt(d0 / m)
    d1 = np.sqrt(d1 / m)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, hmax, span)
    for i in range(m):
        ytmp[i] = y[i] + h0 * K[0, i]
    _deriv(sid, prm, n, t0, sgn, p, with_ld, h0, ytmp, f, K[1])
    d2 = 0.0
    for i in range(m):
        sc = atol + rtol * abs(y[i])
        d2 += ((K[1, i] - K[0, i]) / sc) ** 2
    d2 = np.sqrt(d2 / m) / h0
    if not np.isfinite(d2):
        return h0
    big = max(d1, d2)
    if big <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / big) ** 0.2
    return min(100.0 * h0, h1, hmax, span)


@njit(cache=True, nogil=True)
def solve_node(sid, prm, n, x0, t0, sgn, span, p, with_ld, rtol, atol, hmax,
               method, hfix, esc_on, esc_c, esc_r, tgt, tgt_r, samp_u, samples,
               max_steps, y_out):
    """Integrate one initial condition over ``u in [0, span]``.

    Returns ``(status, u_stop, n_samples, target_hit, crossings)`` and leaves
    the final extended state in ``y_out``.
    """
    m = n + 1 if with_ld else n
    y = np.empty(m)
    ynew = np.empty(m)
    ytmp = np.empty(m)
    ylo = np.empty(m)
    yhi = np.empty(m)
    f = np.empty(n)
    K = np.empty((7, m))
    Kb = np.empty((7, m))
    for k in range(n):
        y[k] = x0[k]
    if with_ld:
        y[n] = 0.0

    u = 0.0
    si = 0
    n_samp = samp_u.shape[0]
    crossings = 0
    hit = -1
    status = RUNNING

    while si < n_samp and samp_u[si] <= 0.0:
        for k in range(n):
            samples[si, k] = y[k]
        si += 1

    if esc_on and _escape_gap(y, n, esc_c, esc_r) >= 0.0:
        status = ESCAPED
    elif tgt.shape[0] > 0:
        hit = _in_target(y, n, tgt, tgt_r)
        if hit >= 0:
            status = SETTLED
    if status == RUNNING and span <= 0.0:
        status = DONE

    if status == RUNNING:
        _deriv(sid, prm, n, t0, sgn, p, with_ld, 0.0, y, f, K[0])
        if method == DOPRI5:
            h = _initial_step(sid, prm, n, t0, sgn, p, with_ld, y, K, ytmp, f,
                              rtol, atol, hmax, span)
        else:
            h = hfix
        steps = 0
        while True:
            if u >= span:
                status = DONE
                break
            if steps >= max_steps:
                status = FAILED
                break
            steps += 1
            h_want = h
            h = min(h, hmax)
            u_land = span
            if si < n_samp and samp_u[si] < span:
                u_land = samp_u[si]
            landing = False
            if u + h >= u_land:
                h = u_land - u
                landing = True
            hmin = 16.0 * EPS * max(abs(u), 1.0)
            if method == DOPRI5:
                _dopri_step(sid, prm, n, t0, sgn, p, with_ld, u, y, h, K, ytmp, f,
                            ynew)
                ok = _all_finite(ynew)
                err = _dopri_err(y, ynew, K, h, rtol, atol) if ok else np.inf
                if not (err <= 1.0):
                    if ok:
                        fac = max(FAC_MIN, SAFETY * err ** -0.2)
                    else:
                        fac = 0.25
                    h = h * min(1.0, fac)
                    if h < hmin:
                        status = FAILED
                        break
                    continue
            else:
                _rk4_step(sid, prm, n, t0, sgn, p, with_ld, u, y, h, K, ytmp, f, ynew)
                err = 1.0
                if not _all_finite(ynew):
                    status = FAILED
                    break

            u_new = u_land if landing else u + h

            if esc_on and _escape_gap(ynew, n, esc_c, esc_r) >= 0.0:
                # bisect the step length on the escape gap
                lo = 0.0
                hi = h
                for i in range(m):
                    yhi[i] = ynew[i]
                for i in range(m):
                    Kb[0, i] = K[0, i]
                for _ in range(200):
                    if _escape_gap(yhi, n, esc_c, esc_r) <= atol:
                        break
                    if (u + hi) - (u + lo) <= 4.0 * EPS * max(abs(u), 1.0):
                        break
                    mid = 0.5 * (lo + hi)
                    if method == DOPRI5:
                        _dopri_step(sid, prm, n, t0, sgn, p, with_ld, u, y, mid, Kb,
                                    ytmp, f, ylo)
                    else:
                        _rk4_step(sid, prm, n, t0, sgn, p, with_ld, u, y, mid, Kb,
                                  ytmp, f, ylo)
                    if not _all_finite(ylo):
                        hi = mid
                        continue
                    if _escape_gap(ylo, n, esc_c, esc_r) >= 0.0:
                        hi = mid
                        for i in range(m):
                            yhi[i] = ylo[i]
                    else:
                        lo = mid
                for i in range(m):
                    y[i] = yhi[i]
                u = u + hi
                status = ESCAPED
                break

            if (y[0] < 0.0) != (ynew[0] < 0.0):
                crossings += 1
            for i in range(m):
                y[i] = ynew[i]
                K[0, i] = K[6, i]
            u = u_new

            while si < n_samp and samp_u[si] <= u:
                for k in range(n):
                    samples[si, k] = y[k]
                si += 1

            if tgt.shape[0] > 0:
                hit = _in_target(y, n, tgt, tgt_r)
                if hit >= 0:
                    status = SETTLED
                    break

            if method == DOPRI5:
                if err == 0.0:
                    fac = FAC_MAX
                else:
                    fac = min(FAC_MAX, max(FAC_MIN, SAFETY * err ** -0.2))
                h = h * fac
                if landing:
                    h = max(h, h_want)
            else:
                h = hfix

    for i in range(m):
        y_out[i] = y[i]
    return status, u, si, hit, crossings


@njit(cache=True, nogil=True)
def solve_batch(sid, prm, n, X0, t0, sgn, span, p, with_ld, rtol, atol, hmax,
                method, hfix, esc_on, esc_c, esc_r, tgt, tgt_r, max_steps,
                out_status, out_u, out_y, out_hit, out_cross):
    samp_u = np.empty(0)
    samples = np.empty((0, n))
    m = n + 1 if with_ld else n
    yb = np.empty(m)
    for i in range(X0.shape[0]):
        st, us, _, hit, cr = solve_node(sid, prm, n, X0[i], t0, sgn, span, p, with_ld,
                                        rtol, atol, hmax, method, hfix, esc_on, esc_c,
                                        esc_r, tgt, tgt_r, samp_u, samples, max_steps, yb)
        out_status[i] = st
        out_u[i] = us
        out_hit[i] = hit
        out_cross[i] = cr
        for k in range(m):
            out_y[i, k] = yb[k]
