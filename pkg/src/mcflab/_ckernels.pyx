# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled explicit flow kernels.

Same stencils, step control and diagnostic columns as ``_pykernels``; the
numpy module is the reference and the test suite compares the two.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, M_PI

cnp.import_array()

cdef enum:
    CURVE = 0
    PROFILE = 1
    MAX_HALVINGS = 20

cdef double TOL_SPEED_SQ = 1e-12


cdef void _curve_eval(const double[:, :] pos, double h, double[:, :] Hv,
                      double* out) noexcept nogil:
    # out: gmin, II_all, max_II, max_H, max_A, volume, max_dtg
    cdef Py_ssize_t N = pos.shape[0], d = pos.shape[1], i, k, ip, im
    cdef double fu[8]
    cdef double fuu[8]
    cdef double g, dot, hn, gmin = 1e300, mx = 0.0, vol = 0.0
    for i in range(N):
        ip = i + 1 if i + 1 < N else 0
        im = i - 1 if i > 0 else N - 1
        g = 0.0
        dot = 0.0
        for k in range(d):
            fu[k] = (pos[ip, k] - pos[im, k]) / (2.0 * h)
            fuu[k] = (pos[ip, k] - 2.0 * pos[i, k] + pos[im, k]) / (h * h)
            g += fu[k] * fu[k]
            dot += fuu[k] * fu[k]
        hn = 0.0
        for k in range(d):
            Hv[i, k] = (fuu[k] - dot / g * fu[k]) / g
            hn += Hv[i, k] * Hv[i, k]
        hn = sqrt(hn)
        if g < gmin:
            gmin = g
        if hn > mx:
            mx = hn
        vol += sqrt(g)
    out[0] = gmin
    out[1] = mx
    out[2] = mx
    out[3] = mx
    out[4] = mx * mx
    out[5] = h * vol
    out[6] = 2.0 * mx * mx


cdef void _profile_eval(const double[:, :] pos, double h, Py_ssize_t band,
                        double[:, :] Hv, double* out) noexcept nogil:
    cdef Py_ssize_t N = pos.shape[0], i
    cdef double rp, rm, zp, zm, ru, zu, ruu, zuu, E, s, nr, nz, k1, k2, hs
    cdef double II, Hn, Aa
    cdef double gmin = 1e300, II_all = 0.0, mII = 0.0, mH = 0.0, mA = 0.0
    cdef double A_all = 0.0, vol = 0.0
    for i in range(N):
        if i == 0:
            rm = -pos[1, 0]
            zm = pos[1, 1]
        else:
            rm = pos[i - 1, 0]
            zm = pos[i - 1, 1]
        if i == N - 1:
            rp = -pos[N - 2, 0]
            zp = pos[N - 2, 1]
        else:
            rp = pos[i + 1, 0]
            zp = pos[i + 1, 1]
        ru = (rp - rm) / (2.0 * h)
        zu = (zp - zm) / (2.0 * h)
        ruu = (rp - 2.0 * pos[i, 0] + rm) / (h * h)
        zuu = (zp - 2.0 * pos[i, 1] + zm) / (h * h)
        E = ru * ru + zu * zu
        s = sqrt(E)
        nr = zu / s
        nz = -ru / s
        k1 = (ruu * nr + zuu * nz) / E
        if i == 0 or i == N - 1:
            k2 = k1
        else:
            k2 = -nr / pos[i, 0]
        hs = k1 + k2
        Hv[i, 0] = hs * nr
        Hv[i, 1] = hs * nz
        II = sqrt(k1 * k1 + k2 * k2)
        Hn = fabs(hs)
        Aa = Hn * II
        if E < gmin:
            gmin = E
        if II > II_all:
            II_all = II
        if Aa > A_all:
            A_all = Aa
        if i >= band and i < N - band:
            if II > mII:
                mII = II
            if Hn > mH:
                mH = Hn
            if Aa > mA:
                mA = Aa
        vol += pos[i, 0] * s
    out[0] = gmin
    out[1] = II_all
    out[2] = mII
    out[3] = mH
    out[4] = mA
    out[5] = 2.0 * M_PI * h * vol
    out[6] = 2.0 * A_all


cdef bint _acceptable(int kind, const double[:, :] pos, double h) noexcept nogil:
    cdef Py_ssize_t N = pos.shape[0], d = pos.shape[1], i, k, ip, im
    cdef double s, diff
    for i in range(N):
        if kind == CURVE:
            ip = i + 1 if i + 1 < N else 0
            im = i - 1 if i > 0 else N - 1
        else:
            if i == 0 or i == N - 1:
                continue
            if pos[i, 0] <= 0.0:
                return False
            ip = i + 1
            im = i - 1
        s = 0.0
        for k in range(d):
            diff = pos[ip, k] - pos[im, k]
            s += diff * diff
        if s / (4.0 * h * h) <= TOL_SPEED_SQ:
            return False
    return True


cdef void _evaluate(int kind, const double[:, :] pos, double h, Py_ssize_t band,
                    double[:, :] Hv, double* out) noexcept nogil:
    if kind == CURVE:
        _curve_eval(pos, h, Hv, out)
    else:
        _profile_eval(pos, h, band, Hv, out)


def measure(int kind, double[:, :] pos, double h, int m, Py_ssize_t band):
    """Diagnostic row (max_II, max_H, max_A, volume, max_dtg) of a state."""
    cdef double out[7]
    Hv = np.empty((pos.shape[0], pos.shape[1]))
    _evaluate(kind, pos, h, band, Hv, out)
    return (out[2], out[3], out[4], out[5], out[6])


def advance(int kind, double[:, ::1] pos, double h, double dt_safety, int m,
            Py_ssize_t band, double q_trigger, Py_ssize_t n_steps, double t0,
            double[:, ::1] diag):
    """Compiled counterpart of ``_pykernels.advance``."""
    cdef Py_ssize_t N = pos.shape[0], d = pos.shape[1], k, i, j, halv
    cdef double out[7]
    cdef double t = t0, dt, a, b
    cdef bint ok
    cdef double[:, ::1] Hv = np.empty((N, d))
    cdef double[:, ::1] trial = np.empty((N, d))
    with nogil:
        for k in range(n_steps):
            _evaluate(kind, pos, h, band, Hv, out)
            if out[2] >= q_trigger:
                diag[k, 0] = t
                diag[k, 1] = 0.0
                for j in range(5):
                    diag[k, 2 + j] = out[2 + j]
                with gil:
                    return k, t, 1
            a = 1.0 / (out[1] * out[1])
            b = out[0] * h * h / m
            dt = dt_safety * (a if a < b else b)
            ok = False
            for halv in range(MAX_HALVINGS + 1):
                for i in range(N):
                    for j in range(d):
                        trial[i, j] = pos[i, j] + dt * Hv[i, j]
                if kind == PROFILE:
                    trial[0, 0] = 0.0
                    trial[N - 1, 0] = 0.0
                if _acceptable(kind, trial, h):
                    ok = True
                    break
                dt *= 0.5
            if not ok:
                with gil:
                    return k, t, 2
            diag[k, 0] = t
            diag[k, 1] = dt
            for j in range(5):
                diag[k, 2 + j] = out[2 + j]
            for i in range(N):
                for j in range(d):
                    pos[i, j] = trial[i, j]
            t += dt
    return n_steps, t, 0
