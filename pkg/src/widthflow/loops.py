"""Closed loops on a surface: energy, length, the W^{1,2} metric and reparametrization.

A :class:`LoopCurve` stores samples on the uniform grid ``theta_k = 2 pi k / n``
with ``n = 2 L m`` (``m`` samples per partition interval of length ``pi / L``),
plus an explicit list of break points that need not lie on the grid. Between
consecutive nodes (samples and breaks merged by parameter) the curve is the
short geodesic, traversed at constant speed in the parameter. Length and
energy are exact for that interpolant:

    Length = sum d_i,    Energy = sum d_i^2 / dtheta_i

with ``d_i`` the intrinsic distance between consecutive nodes. Hence
``Length^2 <= 2 pi Energy`` holds exactly, with equality iff the speed is
constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geom import GeodesicError

TWO_PI = 2.0 * np.pi
_PARAM_EPS = 1e-12


class CurveError(ValueError):
    pass


def _empty_breaks(dim):
    return np.zeros(0), np.zeros((0, dim))


@dataclass(frozen=True, eq=False)
class LoopCurve:
    points: np.ndarray
    L: int
    surface: object = None
    break_params: np.ndarray = None
    break_points: np.ndarray = None
    constant_speed: bool = False
    _nodes: tuple = field(default=None, init=False, repr=False)
    _seg: np.ndarray = field(default=None, init=False, repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2:
            raise CurveError("points must be an (n, N) array with n >= 2")
        if self.L < 1 or pts.shape[0] % (2 * self.L):
            raise CurveError(f"sample count {pts.shape[0]} is not a multiple of 2L = {2 * self.L}")
        object.__setattr__(self, "points", pts)
        if self.break_params is None:
            bp, bx = _empty_breaks(pts.shape[1])
        else:
            bp = np.mod(np.asarray(self.break_params, dtype=float), TWO_PI)
            bx = np.asarray(self.break_points, dtype=float).reshape(len(bp), pts.shape[1])
            order = np.argsort(bp)
            bp, bx = bp[order], bx[order]
        object.__setattr__(self, "break_params", bp)
        object.__setattr__(self, "break_points", bx)

    # -- basic structure ---------------------------------------------------
    @property
    def n(self):
        return self.points.shape[0]

    @property
    def m(self):
        return self.n // (2 * self.L)

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def h(self):
        return TWO_PI / self.n

    @property
    def params(self):
        return self.h * np.arange(self.n)

    def partition_index(self, j):
        """Grid index of the partition point ``x_j`` (taken mod 2L)."""
        return (j % (2 * self.L)) * self.m

    def closed_points(self):
        return np.vstack([self.points, self.points[:1]])

    @classmethod
    def constant(cls, p, L, m, surface=None):
        p = np.asarray(p, dtype=float)
        return cls(np.tile(p, (2 * L * m, 1)), L, surface, constant_speed=True)

    def nodes(self):
        """Merged (params, points) of samples and off-grid breaks, closed at 2 pi."""
        if self._nodes is None:
            grid = self.params
            bp, bx = self.break_params, self.break_points
            if bp.size:
                k = np.rint(bp / self.h)
                off = np.abs(bp - k * self.h) > _PARAM_EPS * TWO_PI
                bp, bx = bp[off], bx[off]
            t = np.concatenate([grid, bp])
            x = np.concatenate([self.points, bx])
            order = np.argsort(t, kind="stable")
            t = np.append(t[order], TWO_PI)
            x = np.vstack([x[order], self.points[:1]])
            object.__setattr__(self, "_nodes", (t, x))
        return self._nodes

    def segment_lengths(self):
        if self._seg is None:
            _, x = self.nodes()
            if self.surface is None:
                seg = distance(None, x[:-1], x[1:])
            else:
                nrm = self.surface.normal(x[:-1])
                nrm = np.vstack([nrm, nrm[:1]])
                seg = self.surface.short_distance(x[:-1], x[1:], nrm[:-1], nrm[1:])
            seg.setflags(write=False)
            object.__setattr__(self, "_seg", seg)
        return self._seg

    # -- interpolant ---------------------------------------------------------
    def evaluate(self, theta):
        """Points of the interpolant at arbitrary parameters."""
        theta = np.mod(np.atleast_1d(np.asarray(theta, dtype=float)), TWO_PI)
        t, x = self.nodes()
        i = np.clip(np.searchsorted(t, theta, side="right") - 1, 0, len(t) - 2)
        frac = (theta - t[i]) / (t[i + 1] - t[i])
        return interpolate(self.surface, x[i], x[i + 1], frac)

    def arclength_at(self, theta):
        """Arclength from parameter 0 to ``theta`` along the interpolant."""
        theta = np.mod(np.atleast_1d(np.asarray(theta, dtype=float)), TWO_PI)
        t, _ = self.nodes()
        seg = self.segment_lengths()
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        i = np.clip(np.searchsorted(t, theta, side="right") - 1, 0, len(t) - 2)
        frac = (theta - t[i]) / (t[i + 1] - t[i])
        return cum[i] + frac * seg[i]

    def with_points(self, points, **kw):
        return replace(self, points=points, **kw)


def distance(surface, p, q):
    if surface is None:
        return np.linalg.norm(q - p, axis=-1)
    return surface.short_distance(p, q)


def interpolate(surface, p, q, frac):
    """Point at fraction ``frac`` of the short geodesic between each ``p``, ``q`` pair."""
    frac = np.asarray(frac, dtype=float)
    if surface is None:
        return p + frac[..., None] * (q - p)
    if getattr(surface, "kind", None) == "sphere":
        return surface.geodesic_eval(p, q, frac[..., None])[..., 0, :]
    lin = p + frac[..., None] * (q - p)
    return surface.project(lin)


def energy(c):
    """Energy: integral of |sigma'|^2 over [0, 2 pi] for the sampled interpolant."""
    t, _ = c.nodes()
    d = c.segment_lengths()
    return float(np.sum(d * d / np.diff(t)))


def length(c):
    return float(np.sum(c.segment_lengths()))


def speed_profile(c):
    t, _ = c.nodes()
    return c.segment_lengths() / np.diff(t)


def _common_grid(c1, c2):
    if c1.dim != c2.dim:
        raise CurveError("curves live in different ambient dimensions")
    if c1.n == c2.n:
        return c1.points, c2.points
    n = max(c1.n, c2.n)
    theta = TWO_PI * np.arange(n) / n
    return c1.evaluate(theta), c2.evaluate(theta)


def w12_distance(c1, c2):
    """W^{1,2} distance sqrt(int |c1 - c2|^2 + |c1' - c2'|^2) on the common grid."""
    a, b = _common_grid(c1, c2)
    n = a.shape[0]
    h = TWO_PI / n
    d = a - b
    dd = np.roll(d, -1, axis=0) - d
    return float(np.sqrt(h * np.sum(d * d) + np.sum(dd * dd) / h))


def sup_distance(c1, c2):
    a, b = _common_grid(c1, c2)
    return float(np.linalg.norm(a - b, axis=-1).max())


def arc_replacement_check(surface, pts, span):
    """Compare an arc with the minimizing geodesic through its endpoints.

    ``pts`` samples the arc uniformly over a parameter interval of length
    ``span``; the geodesic is sampled at the same parameters. Returns the
    derivative term int |(s1 - s2)'|^2, the squared W^{1,2} distance, the
    energy gap E(s1) - E(s2) and the interval length.
    """
    pts = np.asarray(pts, dtype=float)
    k = pts.shape[0] - 1
    h = span / k
    geo = surface.geodesic_chain(pts[:1], pts[-1:], k)[0]
    e1 = float(np.sum(surface.short_distance(pts[:-1], pts[1:]) ** 2) / h)
    e2 = float(np.sum(surface.short_distance(geo[:-1], geo[1:]) ** 2) / h)
    d = pts - geo
    deriv = float(np.sum(np.diff(d, axis=0) ** 2) / h)
    l2 = float(h * np.sum(d[:-1] ** 2))
    return {"deriv_sq": deriv, "dist_sq": deriv + l2, "gap": e1 - e2, "span": span}


def reparametrize_constant_speed(c, fixed_point_param=0.0):
    """Constant-speed reparametrization of ``c`` keeping ``c(fixed_point_param)``
    as the image of parameter 0.

    Explicit breaks are carried to their new parameters. Zero-length curves
    are returned unchanged.
    """
    t, x = c.nodes()
    seg = c.segment_lengths()
    total = float(seg.sum())
    if total <= 1e-14 * max(1.0, float(np.abs(x).max())):
        return c
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    s0 = float(c.arclength_at(fixed_point_param)[0])
    target = np.mod(s0 + total * np.arange(c.n) / c.n, total)
    i = np.clip(np.searchsorted(cum, target, side="right") - 1, 0, len(seg) - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(seg[i] > 0.0, (target - cum[i]) / seg[i], 0.0)
    pts = interpolate(c.surface, x[i], x[i + 1], frac)
    pts[0] = c.evaluate(fixed_point_param)[0]
    bp = bx = None
    if c.break_params.size:
        sb = c.arclength_at(c.break_params)
        bp = TWO_PI * np.mod(sb - s0, total) / total
        bx = c.break_points
    return LoopCurve(pts, c.L, c.surface, bp, bx, constant_speed=True)


def resample(c, n):
    """Evaluate the interpolant of ``c`` on a grid of ``n`` samples."""
    if n % 2:
        raise CurveError("sample count must be even")
    L = c.L
    while n % (2 * L):
        L -= 1
    theta = TWO_PI * np.arange(n) / n
    return LoopCurve(c.evaluate(theta), L, c.surface, c.break_params, c.break_points, c.constant_speed)


def with_budget(c, L, m):
    """Resample ``c`` onto the grid of a break budget ``L`` with ``m`` samples per interval."""
    n = 2 * L * m
    theta = TWO_PI * np.arange(n) / n
    pts = c.evaluate(theta)
    return LoopCurve(pts, L, c.surface, c.break_params, c.break_points, c.constant_speed)


def replace_intervals(c, starts, ends, chain=None):
    """Replace ``c`` on each parameter interval [starts[j], ends[j]] by the
    minimizing geodesic between its endpoint values.

    Intervals are taken counter-clockwise and may wrap through 2 pi. Samples
    and breaks strictly inside an interval are replaced; the interval
    endpoints become breaks.
    """
    surface = c.surface
    if surface is None:
        raise CurveError("linear replacement needs a surface")
    starts = np.mod(np.asarray(starts, dtype=float), TWO_PI)
    ends = np.mod(np.asarray(ends, dtype=float), TWO_PI)
    span = np.mod(ends - starts, TWO_PI)
    span = np.where(span <= _PARAM_EPS, TWO_PI, span)
    P = c.evaluate(starts)
    Q = c.evaluate(ends)
    theta = c.params
    rel = np.mod(theta[None, :] - starts[:, None], TWO_PI)
    inside = (rel > _PARAM_EPS) & (rel < span[:, None] - _PARAM_EPS)
    counts = inside.sum(axis=1)
    kmax = int(counts.max()) if counts.size else 0
    new = c.points.copy()
    if kmax:
        frac = np.zeros((len(starts), kmax))
        idx = np.zeros((len(starts), kmax), dtype=int)
        for j in range(len(starts)):
            ii = np.nonzero(inside[j])[0]
            ii = ii[np.argsort(rel[j, ii])]
            idx[j, : len(ii)] = ii
            frac[j, : len(ii)] = rel[j, ii] / span[j]
        try:
            vals = surface.geodesic_eval(P, Q, frac)
        except GeodesicError as err:
            raise GeodesicError(f"linear replacement failed: {err}", getattr(err, "residual", None)) from err
        for j in range(len(starts)):
            k = counts[j]
            new[idx[j, :k]] = vals[j, :k]
    keep_b = np.ones(c.break_params.size, dtype=bool)
    if c.break_params.size:
        relb = np.mod(c.break_params[None, :] - starts[:, None], TWO_PI)
        keep_b = ~np.any((relb > _PARAM_EPS) & (relb < span[:, None] - _PARAM_EPS), axis=0)
    bp = np.concatenate([c.break_params[keep_b], starts])
    bx = np.concatenate([c.break_points[keep_b], P])
    _, uniq = np.unique(np.round(bp / (_PARAM_EPS * TWO_PI * 10)), return_index=True)
    return LoopCurve(new, c.L, surface, bp[uniq], bx[uniq])


def partition_intervals(c, parity):
    """Grid-aligned [x_{2j+s}, x_{2j+s+2}] intervals for parity 'even' (s=0) or 'odd' (s=1)."""
    if parity not in ("even", "odd"):
        raise ValueError("parity must be 'even' or 'odd'")
    s = 0 if parity == "even" else 1
    x = np.pi / c.L * (2 * np.arange(c.L) + s)
    return x, x + 2.0 * np.pi / c.L


def linear_replacement(c, parity):
    """Replace ``c`` on every even (or odd) interval [x_{2j}, x_{2j+2}] by the
    constant-speed minimizing geodesic with the same endpoints."""
    starts, ends = partition_intervals(c, parity)
    return replace_intervals(c, starts, ends)


def linear_replacement_many(curves, parity):
    """:func:`linear_replacement` for a list of curves sharing one grid,
    solved as a single batch of geodesic problems."""
    if not curves:
        return []
    c0 = curves[0]
    surface = c0.surface
    n, L, m = c0.n, c0.L, c0.m
    if any(c.n != n or c.L != L for c in curves):
        return [linear_replacement(c, parity) for c in curves]
    s = 0 if parity == "even" else 1
    ends_idx = (np.arange(L) * 2 + s) * m
    P = np.stack([c.points[ends_idx] for c in curves])
    Q = np.stack([c.points[(ends_idx + 2 * m) % n] for c in curves])
    try:
        chains = surface.geodesic_chain(P, Q, 2 * m)
    except GeodesicError as err:
        raise GeodesicError(f"linear replacement failed: {err}", getattr(err, "residual", None)) from err
    cols = (ends_idx[:, None] + np.arange(1, 2 * m)[None, :]) % n
    starts = np.pi / L * (2 * np.arange(L) + s)
    span = 2.0 * np.pi / L
    out = []
    for b, c in enumerate(curves):
        new = c.points.copy()
        new[cols] = chains[b, :, 1:-1]
        keep = np.ones(c.break_params.size, dtype=bool)
        if c.break_params.size:
            relb = np.mod(c.break_params[None, :] - starts[:, None], TWO_PI)
            keep = ~np.any((relb > _PARAM_EPS) & (relb < span - _PARAM_EPS), axis=0)
        bp = np.concatenate([c.break_params[keep], starts])
        bx = np.concatenate([c.break_points[keep], P[b]])
        _, uniq = np.unique(np.round(bp / (_PARAM_EPS * TWO_PI * 10)), return_index=True)
        out.append(LoopCurve(new, L, surface, bp[uniq], bx[uniq]))
    return out


def geodesic_pieces(c):
    """Lengths of the pieces between consecutive explicit breaks."""
    if c.break_params.size == 0:
        return np.array([length(c)])
    sb = np.sort(c.arclength_at(c.break_params))
    total = length(c)
    return np.diff(np.append(sb, sb[0] + total))


def lambda_diagnostics(c, tol=1e-8):
    """Check the break-budget invariants; returns a dict of measured values and flags."""
    sp = speed_profile(c)
    total = length(c)
    mean_speed = total / TWO_PI
    pieces = geodesic_pieces(c)
    dev = float(np.abs(sp - mean_speed).max()) if total > 0 else 0.0
    return {
        "breaks": int(c.break_params.size),
        "max_piece_length": float(pieces.max()) if pieces.size else 0.0,
        "max_speed": float(sp.max()),
        "speed_deviation": dev,
        "pieces_ok": bool(pieces.size == 0 or pieces.max() <= TWO_PI * (1 + tol)),
        "lipschitz_ok": bool(sp.max() <= c.L * (1 + tol)),
        "breaks_ok": bool(c.break_params.size <= 2 * c.L),
        "constant_speed_ok": bool(dev <= tol * max(1.0, mean_speed)),
    }


def in_lambda(c, tol=1e-8):
    d = lambda_diagnostics(c, tol)
    return d["pieces_ok"] and d["lipschitz_ok"] and d["breaks_ok"] and d["constant_speed_ok"]


def write_curve_csv(path, c):
    """Curve dump: a header comment with L, speed, length, energy, then param,x1..xN rows."""
    total = length(c)
    lines = [
        f"# L={c.L},speed={total / TWO_PI:.17g},length={total:.17g},energy={energy(c):.17g}",
    ]
    if c.break_params.size:
        flat = np.column_stack([c.break_params, c.break_points]).ravel()
        lines.append("# breaks=" + ";".join(f"{v:.17g}" for v in flat))
    lines.append("param," + ",".join(f"x{i + 1}" for i in range(c.dim)))
    for t, p in zip(c.params, c.points):
        lines.append(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in p))
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def read_curve_csv(path, surface=None):
    with open(path) as fh:
        rows = fh.read().splitlines()
    meta = dict(kv.split("=") for kv in rows[0].lstrip("# ").split(","))
    bp = bx = None
    k = 1
    if rows[1].startswith("# breaks="):
        vals = np.array([float(v) for v in rows[1][len("# breaks="):].split(";")])
        k = 2
    data = np.array([[float(v) for v in r.split(",")] for r in rows[k + 1:] if r])
    if k == 2:
        vals = vals.reshape(-1, data.shape[1])
        bp, bx = vals[:, 0], vals[:, 1:]
    return LoopCurve(data[:, 1:], int(meta["L"]), surface, bp, bx)
