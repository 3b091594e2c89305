"""Time-stepping kernels for the stochastic dynamics.

Two interchangeable backends share the chunked stepping protocol: a numba
JIT backend (default) and a pure-numpy vectorized backend (selected with
GUPSIM_DISABLE_NUMBA=1).  Both advance a batch of independent runs with
per-run parameters, consume pre-scaled complex noise increments, write
strided state records, and report divergence as (step, run, code).

Codes: 0 = clean, 1 = non-finite state, 2 = cavity amplitude above the
instability limit.
"""

from __future__ import annotations

import os

import numpy as np

USE_NUMBA = os.environ.get("GUPSIM_DISABLE_NUMBA", "0").lower() in ("0", "", "false")
if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

HEUN = 1
EULER = 0


def _full_chunk_py(
    a, b1, b2,
    om1, om2, gm1, gm2, g1, g2, kap, d1, d2, eh, ec, beta,
    t0, dt, nsteps, scheme,
    na, nb1, nb2, use_noise,
    rec_a, rec_b1, rec_b2, rec_t, want_a,
    stride, discard, gstep0, rec_pos,
    div_limit, snap, snap_stride,
):
    nb = a.shape[0]
    snap_count = 0
    third = beta / 3.0
    for i in range(nsteps):
        g = gstep0 + i
        t = t0 + i * dt
        if g >= discard and (g - discard) % stride == 0:
            if want_a:
                rec_a[rec_pos, :] = a
            rec_b1[rec_pos, :] = b1
            rec_b2[rec_pos, :] = b2
            rec_t[rec_pos] = t
            rec_pos += 1
        if i % snap_stride == 0:
            snap[snap_count, :] = np.abs(a)
            snap_count += 1

        ph = np.exp(-1j * (d2 * t))
        aa = a.real * a.real + a.imag * a.imag
        v1 = b1 - np.conj(b1)
        v2 = b2 - np.conj(b2)
        k1a = (1j * (-d1 + 2.0 * (g1 * b1.real + g2 * b2.real)) - kap) * a + eh * ph + ec
        k1b1 = (-1j * om1 - gm1) * b1 + (1j * (om1 * third)) * (v1 * v1 * v1) + 1j * (g1 * aa)
        k1b2 = (-1j * om2 - gm2) * b2 + (1j * (om2 * third)) * (v2 * v2 * v2) + 1j * (g2 * aa)
        if scheme == HEUN:
            ap = a + dt * k1a
            b1p = b1 + dt * k1b1
            b2p = b2 + dt * k1b2
            php = np.exp(-1j * (d2 * (t + dt)))
            aap = ap.real * ap.real + ap.imag * ap.imag
            v1p = b1p - np.conj(b1p)
            v2p = b2p - np.conj(b2p)
            k2a = (1j * (-d1 + 2.0 * (g1 * b1p.real + g2 * b2p.real)) - kap) * ap + eh * php + ec
            k2b1 = (-1j * om1 - gm1) * b1p + (1j * (om1 * third)) * (v1p * v1p * v1p) + 1j * (g1 * aap)
            k2b2 = (-1j * om2 - gm2) * b2p + (1j * (om2 * third)) * (v2p * v2p * v2p) + 1j * (g2 * aap)
            a = a + (0.5 * dt) * (k1a + k2a)
            b1 = b1 + (0.5 * dt) * (k1b1 + k2b1)
            b2 = b2 + (0.5 * dt) * (k1b2 + k2b2)
        else:
            a = a + dt * k1a
            b1 = b1 + dt * k1b1
            b2 = b2 + dt * k1b2
        if use_noise:
            a = a + na[i]
            b1 = b1 + nb1[i]
            b2 = b2 + nb2[i]

        bad = ~(np.isfinite(a.real) & np.isfinite(a.imag)
                & np.isfinite(b1.real) & np.isfinite(b1.imag)
                & np.isfinite(b2.real) & np.isfinite(b2.imag))
        if bad.any():
            r = int(np.argmax(bad))
            return a, b1, b2, rec_pos, g + 1, r, 1, snap_count
        over = np.abs(a) > div_limit
        if over.any():
            r = int(np.argmax(over))
            return a, b1, b2, rec_pos, g + 1, r, 2, snap_count
    return a, b1, b2, rec_pos, -1, -1, 0, snap_count


def _single_chunk_py(
    b, om, gm, beta,
    t0, dt, nsteps, scheme,
    nb_arr, use_noise,
    rec_b, rec_t,
    stride, discard, gstep0, rec_pos,
):
    third = beta / 3.0
    for i in range(nsteps):
        g = gstep0 + i
        if g >= discard and (g - discard) % stride == 0:
            rec_b[rec_pos, :] = b
            rec_t[rec_pos] = t0 + i * dt
            rec_pos += 1
        v = b - np.conj(b)
        k1 = (-1j * om - gm) * b + (1j * (om * third)) * (v * v * v) + 1j * 0.0
        if scheme == HEUN:
            bp = b + dt * k1
            vp = bp - np.conj(bp)
            k2 = (-1j * om - gm) * bp + (1j * (om * third)) * (vp * vp * vp) + 1j * 0.0
            b = b + (0.5 * dt) * (k1 + k2)
        else:
            b = b + dt * k1
        if use_noise:
            b = b + nb_arr[i]
        bad = ~(np.isfinite(b.real) & np.isfinite(b.imag))
        if bad.any():
            return b, rec_pos, g + 1, int(np.argmax(bad)), 1
    return b, rec_pos, -1, -1, 0


if USE_NUMBA:

    @njit(cache=True)
    def _full_chunk_nb(
        a, b1, b2,
        om1, om2, gm1, gm2, g1, g2, kap, d1, d2, eh, ec, beta,
        t0, dt, nsteps, scheme,
        na, nb1, nb2, use_noise,
        rec_a, rec_b1, rec_b2, rec_t, want_a,
        stride, discard, gstep0, rec_pos,
        div_limit, snap, snap_stride,
    ):
        nb = a.shape[0]
        snap_count = 0
        for i in range(nsteps):
            g = gstep0 + i
            t = t0 + i * dt
            if g >= discard and (g - discard) % stride == 0:
                for r in range(nb):
                    if want_a:
                        rec_a[rec_pos, r] = a[r]
                    rec_b1[rec_pos, r] = b1[r]
                    rec_b2[rec_pos, r] = b2[r]
                rec_t[rec_pos] = t
                rec_pos += 1
            if i % snap_stride == 0:
                for r in range(nb):
                    snap[snap_count, r] = abs(a[r])
                snap_count += 1
            for r in range(nb):
                third = beta[r] / 3.0
                ph = np.exp(-1j * (d2[r] * t))
                ar = a[r]
                x1 = b1[r]
                x2 = b2[r]
                aa = ar.real * ar.real + ar.imag * ar.imag
                v1 = x1 - np.conj(x1)
                v2 = x2 - np.conj(x2)
                k1a = (1j * (-d1[r] + 2.0 * (g1[r] * x1.real + g2[r] * x2.real)) - kap[r]) * ar + eh[r] * ph + ec[r]
                k1b1 = (-1j * om1[r] - gm1[r]) * x1 + (1j * (om1[r] * third)) * (v1 * v1 * v1) + 1j * (g1[r] * aa)
                k1b2 = (-1j * om2[r] - gm2[r]) * x2 + (1j * (om2[r] * third)) * (v2 * v2 * v2) + 1j * (g2[r] * aa)
                if scheme == HEUN:
                    ap = ar + dt * k1a
                    b1p = x1 + dt * k1b1
                    b2p = x2 + dt * k1b2
                    php = np.exp(-1j * (d2[r] * (t + dt)))
                    aap = ap.real * ap.real + ap.imag * ap.imag
                    v1p = b1p - np.conj(b1p)
                    v2p = b2p - np.conj(b2p)
                    k2a = (1j * (-d1[r] + 2.0 * (g1[r] * b1p.real + g2[r] * b2p.real)) - kap[r]) * ap + eh[r] * php + ec[r]
                    k2b1 = (-1j * om1[r] - gm1[r]) * b1p + (1j * (om1[r] * third)) * (v1p * v1p * v1p) + 1j * (g1[r] * aap)
                    k2b2 = (-1j * om2[r] - gm2[r]) * b2p + (1j * (om2[r] * third)) * (v2p * v2p * v2p) + 1j * (g2[r] * aap)
                    a[r] = ar + (0.5 * dt) * (k1a + k2a)
                    b1[r] = x1 + (0.5 * dt) * (k1b1 + k2b1)
                    b2[r] = x2 + (0.5 * dt) * (k1b2 + k2b2)
                else:
                    a[r] = ar + dt * k1a
                    b1[r] = x1 + dt * k1b1
                    b2[r] = x2 + dt * k1b2
                if use_noise:
                    a[r] = a[r] + na[i, r]
                    b1[r] = b1[r] + nb1[i, r]
                    b2[r] = b2[r] + nb2[i, r]
            for r in range(nb):
                ar = a[r]
                x1 = b1[r]
                x2 = b2[r]
                if not (
                    np.isfinite(ar.real) and np.isfinite(ar.imag)
                    and np.isfinite(x1.real) and np.isfinite(x1.imag)
                    and np.isfinite(x2.real) and np.isfinite(x2.imag)
                ):
                    return a, b1, b2, rec_pos, g + 1, r, 1, snap_count
                if abs(ar) > div_limit[r]:
                    return a, b1, b2, rec_pos, g + 1, r, 2, snap_count
        return a, b1, b2, rec_pos, -1, -1, 0, snap_count

    @njit(cache=True)
    def _single_chunk_nb(
        b, om, gm, beta,
        t0, dt, nsteps, scheme,
        nb_arr, use_noise,
        rec_b, rec_t,
        stride, discard, gstep0, rec_pos,
    ):
        nbatch = b.shape[0]
        for i in range(nsteps):
            g = gstep0 + i
            if g >= discard and (g - discard) % stride == 0:
                for r in range(nbatch):
                    rec_b[rec_pos, r] = b[r]
                rec_t[rec_pos] = t0 + i * dt
                rec_pos += 1
            for r in range(nbatch):
                third = beta[r] / 3.0
                x = b[r]
                v = x - np.conj(x)
                k1 = (-1j * om[r] - gm[r]) * x + (1j * (om[r] * third)) * (v * v * v) + 1j * 0.0
                if scheme == HEUN:
                    xp = x + dt * k1
                    vp = xp - np.conj(xp)
                    k2 = (-1j * om[r] - gm[r]) * xp + (1j * (om[r] * third)) * (vp * vp * vp) + 1j * 0.0
                    b[r] = x + (0.5 * dt) * (k1 + k2)
                else:
                    b[r] = x + dt * k1
                if use_noise:
                    b[r] = b[r] + nb_arr[i, r]
                x = b[r]
                if not (np.isfinite(x.real) and np.isfinite(x.imag)):
                    return b, rec_pos, g + 1, r, 1
        return b, rec_pos, -1, -1, 0

    full_chunk = _full_chunk_nb
    single_chunk = _single_chunk_nb
else:  # pragma: no cover - exercised only when numba is unavailable/disabled
    def full_chunk(a, b1, b2, om1, om2, gm1, gm2, g1, g2, kap, d1, d2, eh, ec, beta,
                   t0, dt, nsteps, scheme, na, nb1, nb2, use_noise,
                   rec_a, rec_b1, rec_b2, rec_t, want_a,
                   stride, discard, gstep0, rec_pos, div_limit, snap, snap_stride):
        # vectorized twin: per-run parameter arrays broadcast across the batch
        res = _full_chunk_py(a, b1, b2, om1, om2, gm1, gm2, g1, g2, kap, d1, d2,
                             eh, ec, beta, t0, dt, nsteps, scheme, na, nb1, nb2,
                             use_noise, rec_a, rec_b1, rec_b2, rec_t, want_a,
                             stride, discard, gstep0, rec_pos, div_limit, snap, snap_stride)
        a[:], b1[:], b2[:] = res[0], res[1], res[2]
        return res

    def single_chunk(b, om, gm, beta, t0, dt, nsteps, scheme, nb_arr, use_noise,
                     rec_b, rec_t, stride, discard, gstep0, rec_pos):
        res = _single_chunk_py(b, om, gm, beta, t0, dt, nsteps, scheme, nb_arr,
                               use_noise, rec_b, rec_t, stride, discard, gstep0, rec_pos)
        b[:] = res[0]
        return res
