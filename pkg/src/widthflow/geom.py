"""Closed convex surfaces in R^3, their normalization, and two-point geodesics.

Three representations are supported: round spheres and ellipsoids (analytic
normals and curvatures) and surfaces of revolution about the z-axis given by a
radial profile ``r(phi)``, ``phi`` the polar angle, interpolated by a periodic
cubic spline.

All array-valued methods act on the last axis, so a batch of points has shape
``(..., 3)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import kernels

logger = logging.getLogger(__name__)

#: geodesic balls of this radius are strictly convex after normalization
CONVEXITY_RADIUS = 4.0 * np.pi
#: curvature bound |A| <= 1/16 imposed by the normalization
MAX_A = 1.0 / 16.0
#: Gaussian curvature bound giving injectivity radius >= 8 pi
MAX_GAUSS = 1.0 / 64.0
SCALE_MARGIN = 1.05


class GeometryError(ValueError):
    """Invalid surface data or a query outside the admissible region."""


class GeodesicError(GeometryError):
    """Two-point geodesic problem without an admissible solution."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


def _unit(v, axis=-1):
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    return v / np.where(n > 0.0, n, 1.0)


def _tangent_basis(n):
    """Two orthonormal tangent vectors for each unit normal in ``n``."""
    n = np.asarray(n, dtype=float)
    helper = np.zeros_like(n)
    use_x = np.abs(n[..., 0]) < 0.9
    helper[..., 0] = np.where(use_x, 1.0, 0.0)
    helper[..., 1] = np.where(use_x, 0.0, 1.0)
    e1 = _unit(np.cross(n, helper))
    e2 = np.cross(n, e1)
    return e1, e2


def _tridiag_inverse(k):
    """Inverse of the Dirichlet second-difference matrix tridiag(-1, 2, -1) of size k."""
    i = np.arange(1, k + 1)
    lo = np.minimum.outer(i, i)
    hi = np.maximum.outer(i, i)
    return lo * (k + 1 - hi) / (k + 1.0)


@dataclass(frozen=True)
class GeodesicSegment:
    """Constant-speed geodesic sampled at uniform parameter values on [0, ``span``]."""

    p: np.ndarray
    q: np.ndarray
    samples: np.ndarray
    speed: float
    span: float = 1.0

    @property
    def length(self):
        return self.speed * self.span


@dataclass(frozen=True, eq=False, kw_only=True)
class Surface:
    """Base class; subclasses implement projection, normals and curvatures."""

    scale: float = 1.0
    kind: str = field(default="surface", init=False)

    # -- geometry primitives (overridden) ---------------------------------
    def project(self, x):
        raise NotImplementedError

    def normal(self, p):
        raise NotImplementedError

    def principal_curvatures(self, p):
        raise NotImplementedError

    def scaled(self, factor):
        raise NotImplementedError

    def project_with_normal(self, x):
        p = self.project(x)
        return p, self.normal(p)

    def random_points(self, rng, n):
        d = _unit(rng.standard_normal((n, 3)))
        return self.project(d * self.extent())

    def extent(self):
        """Largest distance from the origin to the surface."""
        raise NotImplementedError

    def curvature_samples(self, n=4000):
        """Points spread over the surface for sup-type curvature queries."""
        k = int(np.sqrt(n))
        th = np.linspace(0.0, np.pi, k)
        ph = np.linspace(0.0, 2.0 * np.pi, 2 * k, endpoint=False)
        T, P = np.meshgrid(th, ph, indexing="ij")
        d = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1)
        return self.project(d.reshape(-1, 3) * self.extent())

    def sup_A(self):
        k = self.principal_curvatures(self.curvature_samples())
        return float(np.sqrt((k**2).sum(axis=-1)).max())

    def max_gauss(self):
        k = self.principal_curvatures(self.curvature_samples())
        return float((k[..., 0] * k[..., 1]).max())

    def min_principal_curvature(self):
        return float(self.principal_curvatures(self.curvature_samples()).min())

    # -- derived queries ---------------------------------------------------
    def short_distance(self, p, q, n_p=None, n_q=None):
        """Intrinsic distance between nearby points.

        Uses the arc of the osculating circle of the normal section along the
        chord: ``kappa = <q - p, n_q - n_p> / |q - p|^2``. Exact on spheres and
        second-order accurate elsewhere. Normals may be passed in when known.
        """
        d = q - p
        c = np.linalg.norm(d, axis=-1)
        n_p = self.normal(p) if n_p is None else n_p
        n_q = self.normal(q) if n_q is None else n_q
        kap = np.sum(d * (n_q - n_p), axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            kap = np.where(c > 0.0, kap / (c * c), 0.0)
        x = np.clip(0.5 * c * np.abs(kap), 0.0, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            arc = np.where(x > 1e-8, np.arcsin(x) / np.where(x > 0, x, 1.0), 1.0 + x * x / 6.0)
        return c * arc

    def geodesic_chain(self, p, q, n, tol=1e-10, max_iter=200):
        """Discrete geodesics from ``p`` to ``q`` with ``n`` equal steps.

        Minimizes ``sum |x_{i+1} - x_i|^2`` over on-surface chains with fixed
        endpoints, starting from the projected chord. Each sweep solves the
        second-difference system for the tangential residual and projects
        back; under the curvature normalization the iteration contracts fast.

        Returns an array of shape ``p.shape[:-1] + (n + 1, 3)``.
        """
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        batch = p.shape[:-1]
        p2 = p.reshape(-1, 3)
        q2 = q.reshape(-1, 3)
        _check_convexity_radius(p2, q2)
        f = np.linspace(0.0, 1.0, n + 1)
        X = p2[:, None, :] * (1.0 - f)[None, :, None] + q2[:, None, :] * f[None, :, None]
        if n < 2:
            return X.reshape(batch + (n + 1, 3))
        shape = X[:, 1:-1].shape
        pts, nrm = self.project_with_normal(X[:, 1:-1].reshape(-1, 3))
        X[:, 1:-1] = pts.reshape(shape)
        nrm = nrm.reshape(shape)
        kinv = _tridiag_inverse(n - 1)
        step = np.linalg.norm(q2 - p2, axis=-1) / n
        scale_res = np.where(step > 0.0, step, 1.0)
        res = np.inf
        for _ in range(max_iter):
            mid = X[:, 1:-1]
            r = 2.0 * mid - X[:, :-2] - X[:, 2:]
            r -= np.sum(r * nrm, axis=-1)[..., None] * nrm
            res_each = np.abs(r).max(axis=(1, 2)) / scale_res
            res = float(res_each.max()) if res_each.size else 0.0
            if res <= tol:
                break
            d = -np.matmul(kinv, r)
            d -= np.sum(d * nrm, axis=-1)[..., None] * nrm
            pts, nrm = self.project_with_normal((mid + d).reshape(-1, 3))
            X[:, 1:-1] = pts.reshape(shape)
            nrm = nrm.reshape(shape)
        else:
            raise GeodesicError(f"geodesic solver did not converge (residual {res:.3e})", res)
        return X.reshape(batch + (n + 1, 3))

    def geodesic_eval(self, p, q, frac, n_fine=64):
        """Points at parameter fractions ``frac`` (shape (B, K)) along the
        constant-speed geodesics from ``p[b]`` to ``q[b]``."""
        frac = np.asarray(frac, dtype=float)
        chain = self.geodesic_chain(p, q, n_fine)
        u = np.clip(frac, 0.0, 1.0) * n_fine
        i = np.minimum(np.floor(u).astype(int), n_fine - 1)
        t = (u - i)[..., None]
        b = np.arange(chain.shape[0])[:, None]
        pts = (1.0 - t) * chain[b, i] + t * chain[b, i + 1]
        return self.project(pts.reshape(-1, 3)).reshape(pts.shape)

    def slice_axis(self):
        """Unit vector of the height function used for planar-cut sweepouts."""
        return np.array([0.0, 0.0, 1.0])

    def planar_section(self, t, n):
        """``n`` points on the cut of the surface by the plane at relative height ``t``.

        Points are ordered by the angle about the cut axis; ``t = +-1`` gives the
        extremal point repeated ``n`` times.
        """
        raise NotImplementedError

    def to_spec(self):
        raise NotImplementedError


def _check_convexity_radius(p, q):
    chord = np.linalg.norm(q - p, axis=-1)
    bad = np.nonzero(chord > CONVEXITY_RADIUS)[0]
    if bad.size:
        raise GeodesicError(
            f"endpoints of segment {int(bad[0])} are {chord[bad[0]]:.4g} apart, "
            f"beyond the convexity radius {CONVEXITY_RADIUS:.4g}"
        )


@dataclass(frozen=True, eq=False)
class Sphere(Surface):
    radius: float = 1.0
    kind: str = field(default="sphere", init=False)

    def __post_init__(self):
        if not np.isfinite(self.radius) or self.radius <= 0.0:
            raise GeometryError("radius must be positive")

    def project(self, x):
        x = np.asarray(x, dtype=float)
        n = np.linalg.norm(x, axis=-1, keepdims=True)
        if np.any(n < 1e-12 * self.radius):
            raise GeometryError("point at the center has no unique nearest point")
        return self.radius * x / n

    def normal(self, p):
        return _unit(np.asarray(p, dtype=float))

    def principal_curvatures(self, p):
        p = np.asarray(p, dtype=float)
        return np.full(p.shape[:-1] + (2,), 1.0 / self.radius)

    def sup_A(self):
        return float(np.sqrt(2.0) / self.radius)

    def max_gauss(self):
        return float(1.0 / self.radius**2)

    def min_principal_curvature(self):
        return float(1.0 / self.radius)

    def extent(self):
        return self.radius

    def scaled(self, factor):
        return Sphere(radius=self.radius * factor, scale=self.scale * factor)

    def short_distance(self, p, q, n_p=None, n_q=None):
        cr = np.linalg.norm(np.cross(p, q), axis=-1)
        dot = np.einsum("...i,...i->...", p, q)
        return self.radius * np.arctan2(cr, dot)

    def geodesic_chain(self, p, q, n, tol=None, max_iter=None):
        f = np.linspace(0.0, 1.0, n + 1)
        p = np.asarray(p, dtype=float)
        return self.geodesic_eval(p, q, np.broadcast_to(f, p.shape[:-1] + (n + 1,)))

    def geodesic_eval(self, p, q, frac, n_fine=None):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        _check_convexity_radius(p.reshape(-1, 3), q.reshape(-1, 3))
        frac = np.asarray(frac, dtype=float)
        cr = np.linalg.norm(np.cross(p, q), axis=-1)
        dot = np.einsum("...i,...i->...", p, q)
        w = np.arctan2(cr, dot)
        if np.any(w > np.pi - 1e-6):
            raise GeodesicError("antipodal endpoints: shortest geodesic is not unique")
        w = w[..., None]
        sw = np.sin(w)
        small = sw < 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(small, 1.0 - frac, np.sin((1.0 - frac) * w) / np.where(small, 1.0, sw))
            b = np.where(small, frac, np.sin(frac * w) / np.where(small, 1.0, sw))
        out = a[..., None] * p[..., None, :] + b[..., None] * q[..., None, :]
        if np.any(small):
            out = np.where(small[..., None], self.project(out), out)
        return out

    def planar_section(self, t, n):
        z = t * self.radius
        rho = self.radius * np.sqrt(max(0.0, 1.0 - t * t))
        a = 2.0 * np.pi * np.arange(n) / n
        return np.stack([rho * np.cos(a), rho * np.sin(a), np.full(n, z)], axis=-1)

    def to_spec(self):
        return {"kind": "sphere", "params": [self.radius / self.scale], "resolution": {}}


@dataclass(frozen=True, eq=False)
class Ellipsoid(Surface):
    """Ellipsoid with semi-axes ``axes`` along x, y, z; planar cuts run along x."""

    axes: tuple = (1.0, 1.0, 1.0)
    kind: str = field(default="ellipsoid", init=False)

    def __post_init__(self):
        ax = tuple(float(a) for a in self.axes)
        if len(ax) != 3 or min(ax) <= 0.0 or not np.all(np.isfinite(ax)):
            raise GeometryError("ellipsoid semi-axes must be three positive numbers")
        object.__setattr__(self, "axes", ax)

    def project(self, x):
        x = np.asarray(x, dtype=float)
        shape = x.shape
        return kernels.ellipsoid_project(x.reshape(-1, 3), self.axes).reshape(shape)

    def _grad(self, p):
        return np.asarray(p, dtype=float) / np.asarray(self.axes) ** 2

    def normal(self, p):
        return _unit(self._grad(p))

    def principal_curvatures(self, p):
        p = np.asarray(p, dtype=float)
        g = self._grad(p)
        gn = np.linalg.norm(g, axis=-1)
        n = g / gn[..., None]
        e1, e2 = _tangent_basis(n)
        h = 1.0 / np.asarray(self.axes) ** 2
        b11 = (e1 * e1 * h).sum(-1) / gn
        b22 = (e2 * e2 * h).sum(-1) / gn
        b12 = (e1 * e2 * h).sum(-1) / gn
        m = 0.5 * (b11 + b22)
        d = np.sqrt(0.25 * (b11 - b22) ** 2 + b12**2)
        return np.stack([m - d, m + d], axis=-1)

    def curvature_samples(self, n=4000):
        pts = super().curvature_samples(n)
        ax = np.asarray(self.axes)
        poles = np.concatenate([np.diag(ax), -np.diag(ax)])
        return np.concatenate([pts, poles])

    def extent(self):
        return max(self.axes)

    def scaled(self, factor):
        return Ellipsoid(axes=tuple(a * factor for a in self.axes), scale=self.scale * factor)

    def slice_axis(self):
        return np.array([1.0, 0.0, 0.0])

    def planar_section(self, t, n):
        a, b, c = self.axes
        s = np.sqrt(max(0.0, 1.0 - t * t))
        ang = 2.0 * np.pi * np.arange(n) / n
        return np.stack([np.full(n, t * a), b * s * np.cos(ang), c * s * np.sin(ang)], axis=-1)

    def principal_sections(self, n):
        """The three coordinate-plane ellipses, each sampled at ``n`` angles."""
        a, b, c = self.axes
        ang = 2.0 * np.pi * np.arange(n) / n
        co, si, z = np.cos(ang), np.sin(ang), np.zeros(n)
        return [
            np.stack([z, b * co, c * si], axis=-1),
            np.stack([a * co, z, c * si], axis=-1),
            np.stack([a * co, b * si, z], axis=-1),
        ]

    def to_spec(self):
        return {"kind": "ellipsoid", "params": [a / self.scale for a in self.axes], "resolution": {}}


@dataclass(frozen=True, eq=False)
class AxisymmetricSurface(Surface):
    """Surface of revolution about the z-axis with radial profile ``r(phi)``.

    ``radii`` holds ``r`` at ``phi_j = j pi / (len(radii) - 1)``, from the north
    pole to the south pole. The profile is extended evenly across both poles and
    interpolated with a periodic cubic spline, which enforces ``r'(0) = r'(pi) = 0``.
    """

    radii: np.ndarray = None
    kind: str = field(default="axisymmetric", init=False)
    _coef: np.ndarray = field(default=None, init=False, repr=False)
    _h: float = field(default=0.0, init=False, repr=False)

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        if r.ndim != 1 or r.size < 5 or np.any(r <= 0.0) or not np.all(np.isfinite(r)):
            raise GeometryError("axisymmetric profile needs at least 5 positive radii")
        object.__setattr__(self, "radii", r)
        n = r.size - 1
        h = np.pi / n
        full = np.concatenate([r, r[-2::-1]])
        spl = CubicSpline(h * np.arange(2 * n + 1), full, bc_type="periodic")
        object.__setattr__(self, "_coef", np.ascontiguousarray(spl.c))
        object.__setattr__(self, "_h", h)

    @classmethod
    def from_function(cls, fn, n=256, scale=1.0):
        phi = np.linspace(0.0, np.pi, n + 1)
        return cls(radii=fn(phi), scale=scale)

    @classmethod
    def ellipsoid(cls, equatorial, polar, n=256, scale=1.0):
        """Ellipsoid of revolution with semi-axes (equatorial, equatorial, polar)."""
        phi = np.linspace(0.0, np.pi, n + 1)
        r = 1.0 / np.sqrt((np.sin(phi) / equatorial) ** 2 + (np.cos(phi) / polar) ** 2)
        return cls(radii=r, scale=scale)

    @property
    def phi(self):
        return np.linspace(0.0, np.pi, self.radii.size)

    def profile(self, phi):
        return kernels.profile_eval(phi, self._coef, self._h)

    def _meridian(self, x):
        x = np.asarray(x, dtype=float)
        rho = np.hypot(x[..., 0], x[..., 1])
        z = x[..., 2]
        safe = rho > 0.0
        ex = np.where(safe, x[..., 0] / np.where(safe, rho, 1.0), 1.0)
        ey = np.where(safe, x[..., 1] / np.where(safe, rho, 1.0), 0.0)
        phi0 = np.arctan2(rho, z)
        phi = kernels.profile_project(rho, z, self._coef, self._h, phi0)
        return phi, ex, ey

    def _point(self, phi, ex, ey):
        r, _, _ = self.profile(phi)
        rho = r * np.sin(phi)
        return np.stack([rho * ex, rho * ey, r * np.cos(phi)], axis=-1)

    def _frame(self, phi):
        r, r1, r2 = self.profile(phi)
        s, c = np.sin(phi), np.cos(phi)
        tr, tz = r1 * s + r * c, r1 * c - r * s
        tn = np.hypot(tr, tz)
        return r, r1, r2, -tz / tn, tr / tn

    def project(self, x):
        phi, ex, ey = self._meridian(x)
        return self._point(phi, ex, ey)

    def normal(self, p):
        phi, ex, ey = self._meridian(p)
        _, _, _, nr, nz = self._frame(phi)
        return np.stack([nr * ex, nr * ey, nz], axis=-1)

    def project_with_normal(self, x):
        phi, ex, ey = self._meridian(x)
        r, _, _, nr, nz = self._frame(phi)
        rho = r * np.sin(phi)
        p = np.stack([rho * ex, rho * ey, r * np.cos(phi)], axis=-1)
        return p, np.stack([nr * ex, nr * ey, nz], axis=-1)

    def _curvatures_phi(self, phi):
        r, r1, r2, nr, _ = self._frame(phi)
        g = r * r + r1 * r1
        k1 = (r * r + 2.0 * r1 * r1 - r * r2) / g**1.5
        rho = r * np.sin(phi)
        near_pole = np.abs(np.sin(phi)) < 1e-6
        with np.errstate(divide="ignore", invalid="ignore"):
            k2 = np.where(near_pole, k1, nr / np.where(near_pole, 1.0, rho))
        return k1, k2

    def principal_curvatures(self, p):
        phi, _, _ = self._meridian(p)
        k1, k2 = self._curvatures_phi(phi)
        return np.stack([k1, k2], axis=-1)

    def _dense_phi(self):
        return np.linspace(0.0, np.pi, 8 * (self.radii.size - 1) + 1)

    def sup_A(self):
        k1, k2 = self._curvatures_phi(self._dense_phi())
        return float(np.sqrt(k1**2 + k2**2).max())

    def max_gauss(self):
        k1, k2 = self._curvatures_phi(self._dense_phi())
        return float((k1 * k2).max())

    def min_principal_curvature(self):
        k1, k2 = self._curvatures_phi(self._dense_phi())
        return float(min(k1.min(), k2.min()))

    def extent(self):
        return float(self.profile(self._dense_phi())[0].max())

    def scaled(self, factor):
        return AxisymmetricSurface(radii=self.radii * factor, scale=self.scale * factor)

    def planar_section(self, t, n):
        phi = self._dense_phi()
        r = self.profile(phi)[0]
        z = r * np.cos(phi)
        rho = r * np.sin(phi)
        ztop, zbot = z[0], z[-1]
        level = zbot + 0.5 * (1.0 + t) * (ztop - zbot) if t != 0.0 else 0.5 * (ztop + zbot)
        if np.any(np.diff(z) >= 0.0):
            raise GeometryError("profile height is not monotone; surface is not convex")
        rad = float(np.interp(level, z[::-1], rho[::-1]))
        a = 2.0 * np.pi * np.arange(n) / n
        pts = np.stack([rad * np.cos(a), rad * np.sin(a), np.full(n, level)], axis=-1)
        if abs(t) >= 1.0:
            return pts
        # refine to the exact cut height: move along the meridian
        phi_k, ex, ey = self._meridian(pts)
        for _ in range(30):
            rr, r1, _ = self.profile(phi_k)
            zz = rr * np.cos(phi_k)
            dz = r1 * np.cos(phi_k) - rr * np.sin(phi_k)
            phi_k = phi_k - (zz - level) / dz
        return self._point(phi_k, ex, ey)

    def to_spec(self):
        return {
            "kind": "axisymmetric",
            "params": (self.radii / self.scale).tolist(),
            "resolution": {"profile_samples": int(self.radii.size)},
        }


def surface_from_spec(spec):
    """Build a surface from the JSON specification dictionary."""
    kind = spec.get("kind")
    params = list(spec.get("params", []))
    res = spec.get("resolution", {}) or {}
    if kind == "sphere":
        if len(params) != 1:
            raise GeometryError("sphere takes one parameter (radius)")
        return Sphere(radius=float(params[0]))
    if kind == "ellipsoid":
        if len(params) != 3:
            raise GeometryError("ellipsoid takes three semi-axes")
        return Ellipsoid(axes=tuple(params))
    if kind == "axisymmetric":
        if "equatorial" in res or len(params) == 2:
            n = int(res.get("profile_samples", 256))
            a, c = (params if len(params) == 2 else (res["equatorial"], res["polar"]))
            return AxisymmetricSurface.ellipsoid(float(a), float(c), n=n)
        return AxisymmetricSurface(radii=np.asarray(params, dtype=float))
    raise GeometryError(f"unknown surface kind {kind!r}")


def normalize_scaling(surface):
    """Uniformly scale ``surface`` so that |A| <= 1/16 and K <= 1/64.

    The curvature-ratio bound also gives the chord condition
    ``dist(x, y) <= 2 |x - y|`` for ``|x - y| <= 1`` on convex surfaces.
    Surfaces that already comply are returned unchanged with factor 1;
    otherwise the minimal factor is inflated by 5%.

    Returns
    -------
    (Surface, float)
        The scaled surface and the factor applied. Energies scale by
        ``factor**2``.
    """
    kmin = surface.min_principal_curvature()
    if not kmin > 0.0:
        raise GeometryError(f"surface is not strictly convex (min principal curvature {kmin:.3g})")
    need = max(surface.sup_A() / MAX_A, np.sqrt(surface.max_gauss() / MAX_GAUSS))
    if need <= 1.0:
        return surface, 1.0
    factor = SCALE_MARGIN * need
    logger.debug("scaling %s by %.6g", surface.kind, factor)
    return surface.scaled(factor), float(factor)


def minimizing_geodesic(surface, p, q, n_samples=32):
    """Shortest constant-speed geodesic from ``p`` to ``q`` sampled on [0, 1]."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pts = surface.geodesic_chain(p[None], q[None], n_samples)[0]
    length = float(surface.short_distance(pts[:-1], pts[1:]).sum())
    return GeodesicSegment(p=pts[0], q=pts[-1], samples=pts, speed=length)


def second_fundamental_form_norm(surface, p):
    k = surface.principal_curvatures(p)
    return np.sqrt((k**2).sum(axis=-1))


def normal_component(surface, p, v):
    n = surface.normal(p)
    return np.einsum("...i,...i->...", v, n)[..., None] * n


def tangential_component(surface, p, v):
    return np.asarray(v, dtype=float) - normal_component(surface, p, v)
