"""The Birkhoff curve-shortening map Psi and its quantitative properties.

Psi(c) replaces ``c`` by minimizing geodesics on the even partition
intervals, then on the odd ones, then reparametrizes to constant speed
keeping the image of parameter 0. The four-step variant interleaves a
constant-speed reparametrization after the even step; it yields the same
curve and exposes the intermediates used by :func:`property3_bound`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import loops as lp
from .loops import TWO_PI, LoopCurve

FIXED_POINT_TOL = 1e-6
SOLVER_TOL = 1e-8
BOUND_FLOOR = 1e-8


@dataclass
class ReparamMap:
    """Monotone circle map P with c_before = c_after o P, sampled at ``params``."""

    params: np.ndarray
    values: np.ndarray  # unwrapped, values[-1] - values[0] + slope closes to 2 pi
    slopes: np.ndarray  # P' on each node interval of c_before
    widths: np.ndarray  # parameter lengths of those intervals

    @property
    def defect(self):
        """Integral of (P' - 1)^2."""
        return float(np.sum((self.slopes - 1.0) ** 2 * self.widths))

    @property
    def total_increase(self):
        return float(np.sum(self.slopes * self.widths))

    def __call__(self, theta):
        return np.interp(np.mod(theta, TWO_PI), self.params, self.values)


@dataclass
class PsiResult:
    input: LoopCurve
    output: LoopCurve
    gamma_e: LoopCurve
    gamma_o: LoopCurve = None
    gamma_e_tilde: LoopCurve = None
    gamma_o_tilde: LoopCurve = None
    energies: list = field(default_factory=list)
    lengths: list = field(default_factory=list)
    w12_step_distances: list = field(default_factory=list)
    base_param: float = 0.0
    even_map: ReparamMap = None
    tilde_partition: np.ndarray = None

    @property
    def energy_drop(self):
        return self.energies[0] - self.energies[-1]

    @property
    def length_drop(self):
        return self.lengths[0] - self.lengths[-1]

    @property
    def stages(self):
        if self.gamma_e_tilde is None:
            return [self.input, self.gamma_e, self.gamma_o, self.output]
        return [self.input, self.gamma_e, self.gamma_e_tilde, self.gamma_o_tilde, self.output]

    def to_dict(self):
        return {
            "steps": "four" if self.gamma_e_tilde is not None else "three",
            "energies": [float(e) for e in self.energies],
            "lengths": [float(x) for x in self.lengths],
            "energy_drop": float(self.energy_drop),
            "length_drop": float(self.length_drop),
            "w12_step_distances": [float(d) for d in self.w12_step_distances],
            "base_param": float(self.base_param),
        }


def _summarize(res):
    st = res.stages
    res.energies = [lp.energy(c) for c in st]
    res.lengths = [lp.length(c) for c in st]
    res.w12_step_distances = [lp.w12_distance(a, b) for a, b in zip(st[:-1], st[1:])]
    return res


def _is_point(c):
    return float(np.ptp(c.points, axis=0).max()) == 0.0


def psi(c):
    """Three-step Psi: even replacement, odd replacement, constant-speed reparametrization."""
    if _is_point(c):
        return _summarize(PsiResult(c, c, c, c))
    ge = lp.linear_replacement(c, "even")
    go = lp.linear_replacement(ge, "odd")
    out = lp.reparametrize_constant_speed(go, 0.0)
    return _summarize(PsiResult(c, out, ge, go))


def psi_many(curves):
    """Psi applied to many curves on a shared grid, batching the geodesic solves."""
    live = [i for i, c in enumerate(curves) if not _is_point(c)]
    out = list(curves)
    if not live:
        return out
    ge = lp.linear_replacement_many([curves[i] for i in live], "even")
    go = lp.linear_replacement_many(ge, "odd")
    for i, g in zip(live, go):
        out[i] = lp.reparametrize_constant_speed(g, 0.0)
    return out


def _circular_mid(a, b):
    return np.mod(a + 0.5 * np.mod(b - a, TWO_PI), TWO_PI)


def psi_four_step(c):
    """Psi via (A1) even replacement, (B1) constant-speed reparametrization,
    (A2) odd replacement on the reparametrized partition, (B2) constant-speed
    reparametrization."""
    if _is_point(c):
        return _summarize(PsiResult(c, c, c, None, c, c, even_map=_identity_map(c)))
    ge = lp.linear_replacement(c, "even")
    ge_t = lp.reparametrize_constant_speed(ge, 0.0)
    total = lp.length(ge)
    x = np.pi / c.L * np.arange(2 * c.L)
    if total > 0.0:
        xt = TWO_PI * ge.arclength_at(x) / total
    else:
        xt = x
    starts = xt[1::2]
    ends = np.roll(starts, -1)
    go_t = lp.replace_intervals(ge_t, starts, ends)
    base = _circular_mid(xt[-1], xt[1])
    out = lp.reparametrize_constant_speed(go_t, base)
    pmap = reparam_map(ge, ge_t) if total > 0.0 else _identity_map(c)
    res = PsiResult(c, out, ge, None, ge_t, go_t, base_param=float(base), even_map=pmap,
                    tilde_partition=xt)
    return _summarize(res)


def _identity_map(c):
    t = c.params
    return ReparamMap(t, t.copy(), np.ones(c.n), np.full(c.n, c.h))


def reparam_map(c_before, c_after, tol=1e-6):
    """Monotone P with c_before = c_after o P.

    ``c_after`` must be a constant-speed traversal of the image of ``c_before``.
    The base point P(0) is located on ``c_after`` by nearest node, refined
    along the adjacent pieces.
    """
    t, x = c_before.nodes()
    seg = c_before.segment_lengths()
    total_b = float(seg.sum())
    total_a = lp.length(c_after)
    if total_b <= 0.0 or total_a <= 0.0:
        if max(total_a, total_b) > tol:
            raise ValueError("images differ: one curve has zero length")
        return _identity_map(c_before)
    if abs(total_a - total_b) > tol * max(1.0, total_a):
        raise ValueError(f"images differ: lengths {total_b:.10g} vs {total_a:.10g}")
    ta, xa = c_after.nodes()
    # base point of c_before on c_after, by arclength along the nearest piece
    j = int(np.argmin(np.linalg.norm(xa[:-1] - x[0], axis=1)))
    cand = [(j - 1) % (len(ta) - 1), j]
    best = None
    for i in cand:
        a, b = xa[i], xa[i + 1]
        ab = b - a
        den = float(ab @ ab)
        f = 0.0 if den == 0.0 else float(np.clip((x[0] - a) @ ab / den, 0.0, 1.0))
        err = float(np.linalg.norm(a + f * ab - x[0]))
        if best is None or err < best[0]:
            best = (err, ta[i] + f * (ta[i + 1] - ta[i]))
    p0 = float(np.mod(best[1], TWO_PI))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    values = p0 + TWO_PI * cum / total_b
    slopes = TWO_PI * seg / (total_b * np.diff(t))
    check = c_after.evaluate(values[:-1])
    err = float(np.linalg.norm(check - x[:-1], axis=1).max())
    scale = max(1.0, float(np.abs(x).max()))
    if err > tol * scale * 100:
        raise ValueError(f"images differ by {err:.3e}")
    return ReparamMap(t, values, slopes, np.diff(t))


def _replacement_gap_sq(e_before, e_after, interval_ratio, theta):
    """Squared W^{1,2} bound for a geodesic replacement on intervals with
    parameter length ``interval_ratio * pi``."""
    if theta >= 1.0:
        return np.inf
    gap = e_before - e_after
    # energies are only known to rounding; smaller gaps are no gap
    if gap <= 64.0 * np.finfo(float).eps * abs(e_before):
        gap = 0.0
    return (1.0 + interval_ratio**2) * gap / (1.0 - theta)


def _reparam_sq(J, v, A, n_breaks, shift):
    """Squared W^{1,2} distance bound between a constant-speed curve g (speed v,
    geodesic pieces with |g''| <= v^2 A, ``n_breaks`` corners) and g o P,
    given J = int (P' - 1)^2 and the base shift |P(x0) - x0|."""
    # J below rounding level is the zero reparametrization
    J = J if J > 1e-13 else 0.0
    shift = shift if shift > 1e-12 else 0.0
    rho = shift + np.sqrt(np.pi * J)
    first = v * v * J
    if shift == 0.0:
        s2 = (v * v * A) ** 2 * 4.0 * J
    else:
        s2 = (v * v * A) ** 2 * TWO_PI * rho * rho
    s1 = 4.0 * v * v * min(TWO_PI, 2.0 * n_breaks * rho)
    deriv = 2.0 * first + 2.0 * (s1 + s2)
    if shift == 0.0:
        l2 = 4.0 * deriv
    else:
        l2 = 4.0 * np.pi * (v * shift) ** 2 + 8.0 * deriv
    return deriv + l2


@dataclass
class Property3Bound:
    dist: float
    bound: float
    terms: dict

    def holds(self, floor=BOUND_FLOOR):
        return self.dist <= self.bound + floor

    def __iter__(self):
        return iter((self.dist, self.bound))


def _circ(a):
    a = np.mod(a, TWO_PI)
    return float(min(a, TWO_PI - a))


def property3_bound(c, result=None, sup_A=None):
    """Measured dist(c, Psi c) and the explicit bound assembled along the four steps.

    Each step contributes through the triangle inequality: a geodesic
    replacement bound (interval Wirtinger plus the curvature cross term) for
    A1 and A2, and a reparametrization bound in terms of int (P' - 1)^2 for B1
    and B2.
    """
    res = result if result is not None else psi_four_step(c)
    E = res.energies
    if res.lengths[-1] <= 0.0:
        raise ValueError("bound undefined: Psi(c) has zero length")
    surface = c.surface
    A = float(sup_A if sup_A is not None else surface.sup_A())
    L = c.L

    def theta(piece):
        return 2.0 * A * piece * piece / np.pi**2

    ge, ge_t, go_t, out = res.gamma_e, res.gamma_e_tilde, res.gamma_o_tilde, res.output
    piece_e = float(lp.geodesic_pieces(ge).max())
    a1 = _replacement_gap_sq(E[0], E[1], 2.0 / L, theta(piece_e))

    v1 = res.lengths[2] / TWO_PI
    J1 = TWO_PI * (E[1] / E[2] - 1.0)
    b1 = _reparam_sq(J1, v1, A, ge_t.break_params.size, 0.0)

    xt = res.tilde_partition
    odd_span = float(np.max(np.mod(np.roll(xt[1::2], -1) - xt[1::2], TWO_PI)))
    if c.L == 1:
        odd_span = TWO_PI
    piece_o = float(lp.geodesic_pieces(go_t).max())
    a2 = _replacement_gap_sq(E[2], E[3], odd_span / np.pi, theta(piece_o))

    v2 = res.lengths[4] / TWO_PI
    J2 = TWO_PI * (E[3] / E[4] - 1.0)
    total = res.lengths[4]
    shift = _circ(TWO_PI * (go_t.arclength_at(0.0)[0] - go_t.arclength_at(res.base_param)[0]) / total)
    b2 = _reparam_sq(J2, v2, A, out.break_params.size, shift)

    terms = {"A1": np.sqrt(a1), "B1": np.sqrt(b1), "A2": np.sqrt(a2), "B2": np.sqrt(b2),
             "J1": J1, "J2": J2, "shift": shift}
    bound = float(terms["A1"] + terms["B1"] + terms["A2"] + terms["B2"])
    dist = lp.w12_distance(c, out)
    return Property3Bound(dist, bound, {k: float(v) for k, v in terms.items()})


def geodesic_residual(c):
    """Max geodesic curvature of the sampled curve, in inverse scaled length units.

    Tangential part of the second difference divided by the squared step; zero
    for equally spaced points on a geodesic.
    """
    X = c.points
    d2 = np.roll(X, -1, axis=0) - 2.0 * X + np.roll(X, 1, axis=0)
    if c.surface is not None:
        nrm = c.surface.normal(X)
        d2 = d2 - np.einsum("ki,ki->k", d2, nrm)[:, None] * nrm
    step = np.linalg.norm(np.roll(X, -1, axis=0) - X, axis=1)
    ds2 = float(np.mean(step)) ** 2
    if ds2 == 0.0:
        return 0.0
    return float(np.linalg.norm(d2, axis=1).max() / ds2)


def fixed_point_residual(c, result=None):
    res = result if result is not None else psi(c)
    return lp.w12_distance(c, res.output)


def is_geodesic(c, tol=FIXED_POINT_TOL, result=None):
    """True iff the W^{1,2} fixed-point residual of Psi is at most tol * (1 + Length)."""
    return fixed_point_residual(c, result) <= tol * (1.0 + lp.length(c))


# -- distance to the set of closed geodesics -------------------------------

def _orbit_w12(c, basis):
    """Min over orthonormal 3x2 frames F of the W^{1,2} distance between c and
    basis @ F.T, where ``basis`` is (n, 2)."""
    X = c.points
    h = c.h
    dX = np.roll(X, -1, axis=0) - X
    dB = np.roll(basis, -1, axis=0) - basis
    B = h * X.T @ basis + dX.T @ dB / h
    U, _, Vt = np.linalg.svd(B, full_matrices=False)
    g = basis @ (U @ Vt).T
    d = X - g
    dd = np.roll(d, -1, axis=0) - d
    return float(np.sqrt(h * np.sum(d * d) + np.sum(dd * dd) / h))


def great_circle_distance(c, radius, max_cover=2):
    """W^{1,2} distance from ``c`` to the orbit of constant-speed great circles
    (covered up to ``max_cover`` times) of the sphere of the given radius."""
    th = c.params
    best = np.inf
    for k in range(1, max_cover + 1):
        basis = radius * np.column_stack([np.cos(k * th), np.sin(k * th)])
        best = min(best, _orbit_w12(c, basis))
    return best


def _shift_w12(c, g):
    """Min over cyclic shifts and reversal of the discrete W^{1,2} distance c vs g."""
    X = c.points
    h = c.h
    dX = np.roll(X, -1, axis=0) - X
    c2 = h * np.sum(X * X) + np.sum(dX * dX) / h
    best = np.inf
    for G in (g, g[::-1]):
        dG = np.roll(G, -1, axis=0) - G
        g2 = h * np.sum(G * G) + np.sum(dG * dG) / h
        corr = np.zeros(len(G))
        for i in range(X.shape[1]):
            corr += h * np.real(np.fft.ifft(np.conj(np.fft.fft(X[:, i])) * np.fft.fft(G[:, i])))
            corr += np.real(np.fft.ifft(np.conj(np.fft.fft(dX[:, i])) * np.fft.fft(dG[:, i]))) / h
        best = min(best, float(np.sqrt(max(0.0, c2 + g2 - 2.0 * corr.max()))))
    return best


def _constant_speed_samples(points, n):
    closed = np.vstack([points, points[:1]])
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(closed, axis=0), axis=1))])
    target = s[-1] * np.arange(n) / n
    return np.column_stack([np.interp(target, s, closed[:, i]) for i in range(closed.shape[1])])


def dist_to_geodesics(c, tol=FIXED_POINT_TOL):
    """Computable surrogate for dist(c, G).

    Spheres: distance to the great-circle orbit. Ellipsoids: distance to the
    three principal ellipses over shifts and reversal. Otherwise the
    fixed-point residual of Psi.
    """
    s = c.surface
    kind = getattr(s, "kind", None)
    if kind == "sphere":
        return great_circle_distance(c, s.radius)
    if kind == "ellipsoid":
        secs = s.principal_sections(8 * c.n)
        return min(_shift_w12(c, _constant_speed_samples(g, c.n)) for g in secs)
    return fixed_point_residual(c)


# -- seeded random corpus ---------------------------------------------------

def geodesic_polygon(surface, vertices, L, m=32):
    """Constant-speed closed geodesic polygon through ``vertices`` (L of them)."""
    vertices = np.asarray(vertices, dtype=float)
    k = len(vertices)
    n = 2 * L * m
    per = n // k
    if per * k != n:
        raise ValueError("vertex count must divide the sample count")
    chains = surface.geodesic_chain(vertices, np.roll(vertices, -1, axis=0), per)
    pts = chains[:, :-1].reshape(-1, 3)
    params = TWO_PI * np.arange(k) / k
    c = LoopCurve(pts, L, surface, params, vertices)
    return lp.reparametrize_constant_speed(c, 0.0)


def latitude_circle(surface, height, n, L):
    """Planar cut of ``surface`` at relative height ``height`` as a LoopCurve."""
    return LoopCurve(surface.planar_section(height, n), L, surface)


def random_corpus(surface, count, seed, L=None, m=32, amp_range=(0.01, 0.3),
                  band=8, log_height_range=(-3.5, -0.3)):
    """Seeded corpus of Lambda elements: Fourier-perturbed latitude circles
    turned into constant-speed geodesic polygons through L vertices.

    Relative latitude heights are log-uniform in magnitude with a random
    sign, so the corpus covers curves close to the equator densely.
    Returns a list of (curve, meta) with meta = {height, amplitude}.
    """
    rng = np.random.default_rng(seed)
    if L is None:
        L = int(np.ceil(surface.extent())) + 1
    out = []
    th = TWO_PI * np.arange(L) / L
    kk = np.arange(1, band + 1)
    for _ in range(count):
        hgt = rng.choice([-1.0, 1.0]) * 10.0 ** rng.uniform(*log_height_range)
        amp = rng.uniform(*amp_range)
        base = surface.planar_section(hgt, L)
        base = np.roll(base, int(rng.integers(L)), axis=0)
        coef = rng.standard_normal((2, band, 3)) / kk[None, :, None]
        pert = np.cos(np.outer(th, kk)) @ coef[0] + np.sin(np.outer(th, kk)) @ coef[1]
        pert *= amp / np.abs(pert).max()
        verts = surface.project(base + pert)
        out.append((geodesic_polygon(surface, verts, L, m), {"height": float(hgt), "amplitude": float(amp)}))
    return out


def length_drop_survey(curves, eps=0.1, dist=None):
    """Length drop under Psi against distance to the geodesic set.

    Returns min_drop (raw minimum over curves with dist >= eps) and delta =
    eps^2 * min(drop / dist^2), a lower bound for every surveyed drop that
    uses the quadratic vanishing of the drop near G.
    """
    dist = dist or dist_to_geodesics
    outs = psi_many(curves)
    drops = np.array([lp.length(c) - lp.length(o) for c, o in zip(curves, outs)])
    d = np.array([dist(c) for c in curves])
    keep = d >= eps
    if not keep.any():
        return {"count": 0, "min_drop": float("nan"), "delta": float("nan")}
    ratio = drops[keep] / d[keep] ** 2
    return {
        "count": int(keep.sum()),
        "min_drop": float(drops[keep].min()),
        "delta": float(eps * eps * ratio.min()),
        "drops": drops,
        "dist": d,
    }


# -- continuity and homotopies ----------------------------------------------

def smooth_perturbation(c, rng, size, band=8):
    """On-surface curve at W^{1,2} distance about ``size`` from ``c``."""
    if size == 0.0:
        return c
    th = c.params
    kk = np.arange(1, band + 1)
    coef = rng.standard_normal((2, band, c.dim))
    pert = np.cos(np.outer(th, kk)) @ coef[0] + np.sin(np.outer(th, kk)) @ coef[1]
    trial = c.with_points(c.points + pert, break_params=None, break_points=None)
    d = lp.w12_distance(c, trial)
    pts = c.points + pert * (size / d)
    if c.surface is not None:
        for _ in range(3):
            pts = c.surface.project(pts)
            moved = LoopCurve(pts, c.L, c.surface)
            d = lp.w12_distance(c, moved)
            if d == 0.0:
                break
            pts = c.points + (pts - c.points) * (size / d)
        pts = c.surface.project(pts)
    return LoopCurve(pts, c.L, c.surface)


def psi_continuity_probe(c, perturbation_scale, trials, seed=0):
    """Max over random perturbations of size <= scale of w12(Psi c, Psi c')."""
    if perturbation_scale == 0.0 or trials == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    base = psi(c).output
    worst = 0.0
    for _ in range(trials):
        cp = smooth_perturbation(c, rng, perturbation_scale * rng.uniform(0.5, 1.0))
        worst = max(worst, lp.w12_distance(base, psi(cp).output))
    return worst


def homotopy_frames(c, stage, s_samples, result=None):
    """Frames of the explicit homotopies between Psi stages.

    ``gamma-to-gamma_e``: F(x, s) = point at fraction s of the minimizing
    geodesic from c(x) to gamma_e(x).
    ``gamma_e-to-tilde``: G(x, s) = tilde_gamma_e((1 - s) P(x) + s x), from
    gamma_e (s = 0) to its constant-speed reparametrization (s = 1).
    """
    res = result if result is not None else psi_four_step(c)
    svals = np.linspace(0.0, 1.0, s_samples)
    if stage == "gamma-to-gamma_e":
        a, b = res.input.points, res.gamma_e.points
        if c.surface is not None:
            chord = np.linalg.norm(b - a, axis=1)
            if chord.max() > 4.0 * np.pi:
                raise ValueError(f"homotopy undefined: points {chord.max():.4g} apart exceed 4 pi")
        frames = []
        for s in svals:
            pts = lp.interpolate(c.surface, a, b, np.full(len(a), s))
            if s == 0.0:
                pts = a.copy()
            elif s == 1.0:
                pts = b.copy()
            frames.append(LoopCurve(pts, c.L, c.surface))
        return frames
    if stage == "gamma_e-to-tilde":
        ge, gt = res.gamma_e, res.gamma_e_tilde
        if lp.length(ge) == 0.0:
            return [ge for _ in svals]
        P = res.even_map
        x = ge.params
        px = P(x)
        frames = []
        for s in svals:
            if s == 1.0:
                frames.append(gt)
                continue
            u = (1.0 - s) * px + s * x
            pts = gt.evaluate(u)
            if s == 0.0:
                pts = ge.points.copy()
            frames.append(LoopCurve(pts, c.L, c.surface))
        return frames
    raise ValueError(f"unknown homotopy stage {stage!r}")


def dump_diagnostics(path, result, bound=None):
    d = result.to_dict()
    if bound is not None:
        d["property3"] = {"dist": bound.dist, "bound": bound.bound, "terms": bound.terms}
    with open(path, "w") as fh:
        json.dump(d, fh, indent=2, sort_keys=True)
    return d
