"""Pure-numpy implementations of the point-wise hot kernels.

These are the reference versions; ``_kernels.pyx`` mirrors them loop by loop.
Both must return identical results to rounding.
"""

import numpy as np


def ellipsoid_project(x, axes, iters=60):
    """Nearest point on the ellipsoid sum(x_i^2 / a_i^2) = 1 for each row of ``x``.

    Solves for the Lagrange multiplier ``lam`` in
    ``sum(a_i^2 x_i^2 / (a_i^2 + lam)^2) = 1`` with a safeguarded Newton
    iteration, then returns ``a_i^2 x_i / (a_i^2 + lam)``.
    """
    x = np.ascontiguousarray(x, dtype=float)
    a2 = np.asarray(axes, dtype=float) ** 2
    lo = -a2.min()
    lam = np.zeros(x.shape[0])
    for _ in range(iters):
        d = a2 + lam[:, None]
        u = a2 * x * x / (d * d)
        f = u.sum(axis=1) - 1.0
        fp = -2.0 * (u / d).sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(fp != 0.0, f / fp, 0.0)
        new = lam - step
        bad = new <= lo
        new[bad] = 0.5 * (lam[bad] + lo)
        done = np.abs(new - lam) <= 1e-15 * (1.0 + np.abs(lam))
        lam = new
        if done.all():
            break
    return a2 * x / (a2 + lam[:, None])


def profile_eval(phi, coef, h):
    """Evaluate a periodic uniform-knot cubic and its first two derivatives.

    ``coef`` has shape (4, nseg) with the highest power first; the period is
    ``nseg * h``.
    """
    phi = np.asarray(phi, dtype=float)
    nseg = coef.shape[1]
    period = nseg * h
    u = np.mod(phi, period)
    i = np.minimum((u / h).astype(np.int64), nseg - 1)
    t = u - i * h
    c0, c1, c2, c3 = coef[0, i], coef[1, i], coef[2, i], coef[3, i]
    r = ((c0 * t + c1) * t + c2) * t + c3
    r1 = (3.0 * c0 * t + 2.0 * c1) * t + c2
    r2 = 6.0 * c0 * t + 2.0 * c1
    return r, r1, r2


def profile_project(rho, z, coef, h, phi0, iters=50):
    """Newton iteration for the closest point of the meridian curve
    ``(r(phi) sin phi, r(phi) cos phi)`` to each meridian point ``(rho, z)``.

    Returns the angle ``phi`` of the closest point.
    """
    phi = np.array(phi0, dtype=float)
    rho = np.asarray(rho, dtype=float)
    z = np.asarray(z, dtype=float)
    for _ in range(iters):
        r, r1, r2 = profile_eval(phi, coef, h)
        s, c = np.sin(phi), np.cos(phi)
        px, pz = r * s - rho, r * c - z
        tx, tz = r1 * s + r * c, r1 * c - r * s
        ax = r2 * s + 2.0 * r1 * c - r * s
        az = r2 * c - 2.0 * r1 * s - r * c
        g = px * tx + pz * tz
        gp = tx * tx + tz * tz + px * ax + pz * az
        # far from the curve gp can go non-positive; fall back to a gradient step
        gp = np.where(gp > 0.0, gp, tx * tx + tz * tz)
        step = np.clip(g / gp, -0.5, 0.5)
        phi = phi - step
        if np.all(np.abs(step) < 1e-15):
            break
    return phi
