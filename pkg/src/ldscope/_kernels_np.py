"""Vectorized numpy counterpart of :mod:`ldscope._kernels_nb`.

Every node keeps its own step size, time and status; each sweep of the main
loop advances all still-running nodes by one attempted step. States are laid
out as ``(m, N)`` so :func:`ldscope._fields.field` broadcasts over nodes.
"""
from __future__ import annotations

import numpy as np

from ._fields import field
from ._kernels_nb import (
    A21, A31, A32, A41, A42, A43, A51, A52, A53, A54, A61, A62, A63, A64, A65,
    B1, B3, B4, B5, B6, C2, C3, C4, C5, DONE, DOPRI5, E1, E3, E4, E5, E6, E7,
    EPS, ESCAPED, FAC_MAX, FAC_MIN, FAILED, RUNNING, SAFETY, SETTLED,
)


def _deriv(sid, prm, n, t0, sgn, p, with_ld, u, y):
    f = np.empty((n, y.shape[1]))
    field(sid, prm, t0 + sgn * u, y, f)
    out = np.empty_like(y)
    out[:n] = sgn * f
    if with_ld:
        out[n] = np.sum(np.abs(f) ** p, axis=0)
    return out


def _dopri(sid, prm, n, t0, sgn, p, with_ld, u, y, h, k1):
    d = lambda uu, yy: _deriv(sid, prm, n, t0, sgn, p, with_ld, uu, yy)
    k2 = d(u + C2 * h, y + h * (A21 * k1))
    k3 = d(u + C3 * h, y + h * (A31 * k1 + A32 * k2))
    k4 = d(u + C4 * h, y + h * (A41 * k1 + A42 * k2 + A43 * k3))
    k5 = d(u + C5 * h, y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
    k6 = d(u + h, y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5))
    ynew = y + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
    k7 = d(u + h, ynew)
    e = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
    return ynew, k7, e


def _rk4(sid, prm, n, t0, sgn, p, with_ld, u, y, h, k1):
    d = lambda uu, yy: _deriv(sid, prm, n, t0, sgn, p, with_ld, uu, yy)
    k2 = d(u + 0.5 * h, y + 0.5 * h * k1)
    k3 = d(u + 0.5 * h, y + 0.5 * h * k2)
    k4 = d(u + h, y + h * k3)
    ynew = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return ynew, d(u + h, ynew)


def _gap(y, n, c, r):
    return np.sqrt(np.sum((y[:n] - c[:, None]) ** 2, axis=0)) - r


def _target(y, n, tgt, tgt_r):
    hit = np.full(y.shape[1], -1, dtype=np.int64)
    for j in range(tgt.shape[0] - 1, -1, -1):
        inside = np.sqrt(np.sum((y[:n] - tgt[j][:, None]) ** 2, axis=0)) < tgt_r
        hit[inside] = j
    return hit


def _initial_step(sid, prm, n, t0, sgn, p, with_ld, y, k1, rtol, atol, hmax, span):
    m = y.shape[0]
    sc = atol + rtol * np.abs(y)
    d0 = np.sqrt(np.sum((y / sc) ** 2, axis=0) / m)
    d1 = np.sqrt(np.sum((k1 / sc) ** 2, axis=0) / m)
    small = (d0 < 1e-5) | (d1 < 1e-5)
    with np.errstate(divide="ignore", invalid="ignore"):
        h0 = np.where(small, 1e-6, 0.01 * d0 / np.where(small, 1.0, d1))
    h0 = np.minimum(np.minimum(h0, hmax), span)
    k2 = _deriv(sid, prm, n, t0, sgn, p, with_ld, h0, y + h0 * k1)
    with np.errstate(over="ignore", invalid="ignore"):
        d2 = np.sqrt(np.sum(((k2 - k1) / sc) ** 2, axis=0) / m) / h0
        big = np.maximum(d1, d2)
        h1 = np.where(big <= 1e-15, np.maximum(1e-6, h0 * 1e-3),
                      (0.01 / np.where(big <= 1e-15, 1.0, big)) ** 0.2)
    h = np.minimum(np.minimum(np.minimum(100.0 * h0, h1), hmax), span)
    return np.where(np.isfinite(d2), h, h0)


def solve_batch(sid, prm, n, X0, t0, sgn, span, p, with_ld, rtol, atol, hmax,
                method, hfix, esc_on, esc_c, esc_r, tgt, tgt_r, max_steps,
                samp_u=None):
    """Integrate ``N`` initial conditions at once.

    Returns ``(status, u_stop, Y, hit, crossings, samples, n_samples)`` with
    ``Y`` shaped ``(N, m)`` and ``samples`` shaped ``(N, S, n)``.
    """
    X0 = np.asarray(X0, dtype=np.float64)
    N = X0.shape[0]
    m = n + 1 if with_ld else n
    samp_u = np.empty(0) if samp_u is None else np.asarray(samp_u, dtype=np.float64)
    S = samp_u.shape[0]
    samples = np.zeros((N, S, n))

    Y = np.zeros((m, N))
    Y[:n] = X0.T
    U = np.zeros(N)
    status = np.full(N, RUNNING, dtype=np.int64)
    hit = np.full(N, -1, dtype=np.int64)
    cross = np.zeros(N, dtype=np.int64)
    si = np.zeros(N, dtype=np.int64)
    steps = np.zeros(N, dtype=np.int64)

    n0 = int(np.searchsorted(samp_u, 0.0, side="right"))
    for j in range(n0):
        samples[:, j, :] = X0
    si[:] = n0

    if esc_on:
        status[_gap(Y, n, esc_c, esc_r) >= 0.0] = ESCAPED
    if tgt.shape[0] > 0:
        h0 = _target(Y, n, tgt, tgt_r)
        fresh = (status == RUNNING) & (h0 >= 0)
        status[fresh] = SETTLED
        hit[fresh] = h0[fresh]
    if span <= 0.0:
        status[status == RUNNING] = DONE

    run = status == RUNNING
    K0 = np.zeros((m, N))
    H = np.zeros(N)
    if run.any():
        idx = np.nonzero(run)[0]
        K0[:, idx] = _deriv(sid, prm, n, t0, sgn, p, with_ld, U[idx], Y[:, idx])
        if method == DOPRI5:
            H[idx] = _initial_step(sid, prm, n, t0, sgn, p, with_ld, Y[:, idx],
                                   K0[:, idx], rtol, atol, hmax, span)
        else:
            H[idx] = hfix

    samp_ext = np.append(samp_u, np.inf)
    while True:
        idx = np.nonzero(status == RUNNING)[0]
        if idx.size == 0:
            break
        u = U[idx]
        done = u >= span
        status[idx[done]] = DONE
        over = ~done & (steps[idx] >= max_steps)
        status[idx[over]] = FAILED
        keep = ~done & ~over
        idx = idx[keep]
        if idx.size == 0:
            continue
        steps[idx] += 1
        u = U[idx]
        y = Y[:, idx]
        k1 = K0[:, idx]
        h_want = H[idx]
        h = np.minimum(h_want, hmax)
        nxt = samp_ext[si[idx]]
        u_land = np.where(nxt < span, nxt, span)
        landing = u + h >= u_land
        h = np.where(landing, u_land - u, h)
        hmin = 16.0 * EPS * np.maximum(np.abs(u), 1.0)

        with np.errstate(over="ignore", invalid="ignore"):
            if method == DOPRI5:
                ynew, k7, e = _dopri(sid, prm, n, t0, sgn, p, with_ld, u, y, h, k1)
                ok = np.all(np.isfinite(ynew), axis=0)
                sc = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
                err = np.sqrt(np.sum((e / sc) ** 2, axis=0) / m)
                err = np.where(ok, err, np.inf)
                rej = ~(err <= 1.0)
            else:
                ynew, k7 = _rk4(sid, prm, n, t0, sgn, p, with_ld, u, y, h, k1)
                ok = np.all(np.isfinite(ynew), axis=0)
                err = np.ones_like(u)
                rej = np.zeros_like(ok)
                status[idx[~ok]] = FAILED

        if method == DOPRI5 and rej.any():
            r = np.nonzero(rej)[0]
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                fac = np.where(ok[r], np.maximum(FAC_MIN, SAFETY * err[r] ** -0.2), 0.25)
            hr = h[r] * np.minimum(1.0, fac)
            H[idx[r]] = hr
            status[idx[r[hr < hmin[r]]]] = FAILED

        acc = np.nonzero(~rej & ok)[0]
        if acc.size == 0:
            continue
        ia = idx[acc]
        ya, yn, ua, ha = y[:, acc], ynew[:, acc], u[acc], h[acc]
        u_new = np.where(landing[acc], u_land[acc], ua + ha)

        moving = np.ones(acc.size, dtype=bool)
        if esc_on:
            esc = _gap(yn, n, esc_c, esc_r) >= 0.0
            if esc.any():
                e_ = np.nonzero(esc)[0]
                yhi, hi = _bisect_escape(sid, prm, n, t0, sgn, p, with_ld, method,
                                         ua[e_], ya[:, e_], k1[:, acc][:, e_], ha[e_],
                                         yn[:, e_], esc_c, esc_r, atol)
                Y[:, ia[e_]] = yhi
                U[ia[e_]] = ua[e_] + hi
                status[ia[e_]] = ESCAPED
                moving[e_] = False

        mv = np.nonzero(moving)[0]
        if mv.size == 0:
            continue
        im = ia[mv]
        cross[im] += (ya[0, mv] < 0.0) != (yn[0, mv] < 0.0)
        Y[:, im] = yn[:, mv]
        K0[:, im] = k7[:, acc][:, mv]
        U[im] = u_new[mv]

        if S:
            while True:
                pend = si[im] < S
                if not pend.any():
                    break
                due = np.zeros(im.size, dtype=bool)
                due[pend] = samp_u[si[im][pend]] <= U[im][pend]
                if not due.any():
                    break
                d_ = im[due]
                samples[d_, si[d_], :] = Y[:n, d_].T
                si[d_] += 1

        if tgt.shape[0] > 0:
            th = _target(Y[:, im], n, tgt, tgt_r)
            got = th >= 0
            status[im[got]] = SETTLED
            hit[im[got]] = th[got]

        if method == DOPRI5:
            em = err[acc][mv]
            with np.errstate(divide="ignore"):
                fac = np.where(em == 0.0, FAC_MAX,
                               np.minimum(FAC_MAX, np.maximum(FAC_MIN, SAFETY * em ** -0.2)))
            hn = ha[mv] * fac
            hn = np.where(landing[acc][mv], np.maximum(hn, h_want[acc][mv]), hn)
            H[im] = hn
        else:
            H[im] = hfix

    return status, U, Y.T.copy(), hit, cross, samples, si


def _bisect_escape(sid, prm, n, t0, sgn, p, with_ld, method, u, y, k1, h, yhi,
                   esc_c, esc_r, atol):
    lo = np.zeros_like(h)
    hi = h.copy()
    yhi = yhi.copy()
    for _ in range(200):
        g = _gap(yhi, n, esc_c, esc_r)
        live = (g > atol) & ((u + hi) - (u + lo) > 4.0 * EPS * np.maximum(np.abs(u), 1.0))
        if not live.any():
            break
        L = np.nonzero(live)[0]
        mid = 0.5 * (lo[L] + hi[L])
        with np.errstate(over="ignore", invalid="ignore"):
            if method == DOPRI5:
                ym, _, _ = _dopri(sid, prm, n, t0, sgn, p, with_ld, u[L], y[:, L], mid, k1[:, L])
            else:
                ym, _ = _rk4(sid, prm, n, t0, sgn, p, with_ld, u[L], y[:, L], mid, k1[:, L])
            fin = np.all(np.isfinite(ym), axis=0)
            out = ~fin | (_gap(ym, n, esc_c, esc_r) >= 0.0)
        up = L[out]
        hi[up] = mid[out]
        good = out & fin
        yhi[:, L[good]] = ym[:, good]
        lo[L[~out]] = mid[~out]
    return yhi, hi
