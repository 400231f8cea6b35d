# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the point-wise kernels in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, fabs, fmod, floor

cnp.import_array()


def ellipsoid_project(x, axes, int iters=60):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], i, k
    cdef int it
    cdef double a2[3]
    cdef double lo, lam, new, f, fp, d, u
    out = np.empty((n, 3), dtype=np.float64)
    cdef double[:, ::1] ov = out
    for k in range(3):
        a2[k] = float(axes[k]) ** 2
    lo = min(a2[0], a2[1], a2[2])
    lo = -lo
    for i in range(n):
        lam = 0.0
        for it in range(iters):
            f = -1.0
            fp = 0.0
            for k in range(3):
                d = a2[k] + lam
                u = a2[k] * xv[i, k] * xv[i, k] / (d * d)
                f += u
                fp -= 2.0 * u / d
            if fp != 0.0:
                new = lam - f / fp
            else:
                new = lam
            if new <= lo:
                new = 0.5 * (lam + lo)
            if fabs(new - lam) <= 1e-15 * (1.0 + fabs(lam)):
                lam = new
                break
            lam = new
        for k in range(3):
            ov[i, k] = a2[k] * xv[i, k] / (a2[k] + lam)
    return out


cdef inline void _peval(double phi, double[:, ::1] c, double h, Py_ssize_t nseg,
                        double* r, double* r1, double* r2) nogil:
    cdef double period = nseg * h
    cdef double u = fmod(phi, period)
    cdef Py_ssize_t i
    cdef double t
    if u < 0:
        u += period
    i = <Py_ssize_t>floor(u / h)
    if i > nseg - 1:
        i = nseg - 1
    t = u - i * h
    r[0] = ((c[0, i] * t + c[1, i]) * t + c[2, i]) * t + c[3, i]
    r1[0] = (3.0 * c[0, i] * t + 2.0 * c[1, i]) * t + c[2, i]
    r2[0] = 6.0 * c[0, i] * t + 2.0 * c[1, i]


def profile_eval(phi, coef, double h):
    cdef double[::1] pv = np.ascontiguousarray(np.ravel(phi), dtype=np.float64)
    cdef double[:, ::1] c = np.ascontiguousarray(coef, dtype=np.float64)
    cdef Py_ssize_t n = pv.shape[0], i, nseg = c.shape[1]
    r = np.empty(n)
    r1 = np.empty(n)
    r2 = np.empty(n)
    cdef double[::1] rv = r, r1v = r1, r2v = r2
    with nogil:
        for i in range(n):
            _peval(pv[i], c, h, nseg, &rv[i], &r1v[i], &r2v[i])
    shape = np.shape(phi)
    return r.reshape(shape), r1.reshape(shape), r2.reshape(shape)


def profile_project(rho, z, coef, double h, phi0, int iters=50):
    cdef double[::1] rv = np.ascontiguousarray(np.ravel(rho), dtype=np.float64)
    cdef double[::1] zv = np.ascontiguousarray(np.ravel(z), dtype=np.float64)
    cdef double[:, ::1] c = np.ascontiguousarray(coef, dtype=np.float64)
    out = np.array(np.ravel(phi0), dtype=np.float64)
    cdef double[::1] ph = out
    cdef Py_ssize_t n = rv.shape[0], i, nseg = c.shape[1]
    cdef int it
    cdef double r, r1, r2, s, co, px, pz, tx, tz, ax, az, g, gp, step
    with nogil:
        for i in range(n):
            for it in range(iters):
                _peval(ph[i], c, h, nseg, &r, &r1, &r2)
                s = sin(ph[i])
                co = cos(ph[i])
                px = r * s - rv[i]
                pz = r * co - zv[i]
                tx = r1 * s + r * co
                tz = r1 * co - r * s
                ax = r2 * s + 2.0 * r1 * co - r * s
                az = r2 * co - 2.0 * r1 * s - r * co
                g = px * tx + pz * tz
                gp = tx * tx + tz * tz + px * ax + pz * az
                if gp <= 0.0:
                    gp = tx * tx + tz * tz
                step = g / gp
                if step > 0.5:
                    step = 0.5
                elif step < -0.5:
                    step = -0.5
                ph[i] = ph[i] - step
                if fabs(step) < 1e-15:
                    break
    return out.reshape(np.shape(rho))
