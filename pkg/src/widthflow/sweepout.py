"""Sweepouts by closed curves, Birkhoff tightening and the width estimate.

The width is approximated by the max slice energy of a tightened planar-cut
sweepout on the normalized surface, then converted back with scale^2.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import birkhoff as bk
from . import loops as lp
from .geom import normalize_scaling
from .loops import TWO_PI, LoopCurve


@dataclass(frozen=True)
class Sweepout:
    t_grid: np.ndarray
    slices: tuple
    surface: object
    L: int
    homotopy_tag: str = "degree-one"
    parameter_space: str = "interval[-1,1]"

    def energies(self):
        return np.array([lp.energy(c) for c in self.slices])

    def lengths(self):
        return np.array([lp.length(c) for c in self.slices])

    def with_slices(self, slices):
        return replace(self, slices=tuple(slices))


@dataclass
class WidthConfig:
    M_slices: int = 64
    L: object = "auto"
    m: int = 32
    iterations: int = 200
    rel_tol: float = 1e-6
    patience: int = 10
    delta_frac: float = 0.01
    watch: str = "band"
    noise: float = 0.0
    seed: int = 0
    jobs: int = 1

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in (d or {}).items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class WidthReport:
    width_estimate: float
    scale: float
    L: int
    max_energies: list = field(default_factory=list)
    argmax_t: list = field(default_factory=list)
    near_max_counts: list = field(default_factory=list)
    max_dist_to_G: list = field(default_factory=list)
    near_max: list = field(default_factory=list)
    iterations: int = 0
    stop_reason: str = ""
    delta: float = 0.0

    @property
    def width_original(self):
        return self.width_estimate / self.scale**2

    def summary(self):
        return {
            "width_scaled": self.width_estimate,
            "width_original": self.width_original,
            "scale": self.scale,
            "L": self.L,
            "iterations": self.iterations,
            "stop_reason": self.stop_reason,
            "argmax_t": self.argmax_t[-1] if self.argmax_t else None,
            "near_max_count": len(self.near_max),
            "max_dist_to_G": max((d for _, _, d in self.near_max), default=0.0),
        }


def admissible_L(speeds, requested="auto"):
    """Smallest break budget whose Lipschitz bound covers the given speeds."""
    need = max(1, math.ceil(float(np.max(speeds)) * (1.0 + 1e-9)))
    if requested in (None, "auto"):
        return need
    return max(int(requested), need)


def initial_sweepout(surface, M_slices=64, L="auto", m=32):
    """Planar cuts perpendicular to the surface's slice axis, as constant-speed
    loops; the extreme cuts are point curves."""
    if M_slices < 2:
        raise ValueError("M_slices must be at least 2")
    t_grid = np.linspace(-1.0, 1.0, M_slices + 1)
    dense = 2048
    raw = [surface.planar_section(t, dense) for t in t_grid]
    lens = []
    for pts in raw:
        closed = np.vstack([pts, pts[:1]])
        lens.append(float(np.sum(surface.short_distance(closed[:-1], closed[1:]))))
    L_eff = admissible_L(np.array(lens) / TWO_PI, L)
    n = 2 * L_eff * m
    slices = []
    for t, pts in zip(t_grid, raw):
        if abs(t) == 1.0 or float(np.ptp(pts, axis=0).max()) == 0.0:
            slices.append(LoopCurve.constant(pts[0], L_eff, m, surface))
            continue
        c = LoopCurve(surface.planar_section(t, n), L_eff, surface)
        if getattr(surface, "kind", None) != "sphere":
            c = lp.reparametrize_constant_speed(c, 0.0)
        slices.append(c)
    return Sweepout(t_grid, tuple(slices), surface, L_eff)


def perturbed_sweepout(s, amplitude, seed, band=8):
    """Add seeded Fourier noise (modes 1..band) with an envelope vanishing at t = +-1."""
    rng = np.random.default_rng(seed)
    kk = np.arange(1, band + 1)
    coef = rng.standard_normal((2, band, 3)) / kk[None, :, None]
    out = []
    for t, c in zip(s.t_grid, s.slices):
        if abs(t) == 1.0:
            out.append(c)
            continue
        th = c.params
        pert = np.cos(np.outer(th, kk)) @ coef[0] + np.sin(np.outer(th, kk)) @ coef[1]
        pert *= amplitude * (1.0 - t * t) / np.abs(pert).max()
        out.append(LoopCurve(s.surface.project(c.points + pert), c.L, s.surface))
    return s.with_slices(out)


def _polygon(c):
    verts = c.points[c.m * np.arange(2 * c.L)]
    return bk.geodesic_polygon(c.surface, verts, c.L, c.m)


def pl_replace(s):
    """Replace every slice by the constant-speed geodesic polygon through its
    values at the 2L partition points; point curves are kept."""
    out = []
    for c in s.slices:
        if bk._is_point(c):
            out.append(c)
            continue
        sp = lp.speed_profile(c)
        if sp.max() * np.pi / c.L > 4.0 * np.pi:
            raise ValueError("no admissible partition: increase L")
        out.append(_polygon(c))
    return s.with_slices(out)


def _psi_chunk(curves):
    return bk.psi_many(list(curves))


def _apply_psi(slices, jobs, pool):
    if jobs <= 1 or pool is None:
        return bk.psi_many(list(slices))
    chunks = np.array_split(np.arange(len(slices)), jobs)
    parts = pool.map(_psi_chunk, [[slices[i] for i in ch] for ch in chunks])
    return [c for part in parts for c in part]


def _dist_fn(surface):
    if getattr(surface, "kind", None) in ("sphere", "ellipsoid"):
        return bk.dist_to_geodesics
    return None


def tighten(s, iterations=200, rel_tol=1e-6, patience=10, delta_frac=0.01, jobs=1,
            keep_every=None, scale=1.0, watch="band"):
    """Iterate Psi on every slice.

    Stops when, for ``patience`` consecutive iterations, every slice in the
    near-max band (energy > max - delta_frac * max) lost less than ``rel_tol``
    of its energy, or after ``iterations`` steps. With ``watch="max"`` only the
    maximal energy is watched. Returns (history, report);
    history holds the initial and final sweepouts plus every ``keep_every``-th.
    """
    if watch not in ("band", "max"):
        raise ValueError(f"watch must be 'band' or 'max', not {watch!r}")
    dist = _dist_fn(s.surface)
    E = s.energies()
    report = WidthReport(float(E.max()), scale, s.L, delta=delta_frac)
    history = [s]
    quiet = 0
    pool = ProcessPoolExecutor(jobs) if jobs > 1 else None
    try:
        cur = s
        for it in range(1, iterations + 1):
            new_slices = _apply_psi(cur.slices, jobs, pool)
            E_new = np.array([lp.energy(c) for c in new_slices])
            band = E > E.max() * (1.0 - delta_frac)
            if watch == "max":
                change = float((E.max() - E_new.max()) / max(E.max(), 1e-300))
            else:
                change = float(np.max((E[band] - E_new[band]) / np.maximum(E[band], 1e-300)))
            prev = cur
            cur = cur.with_slices(new_slices)
            mx = float(E_new.max())
            i = int(np.argmax(E_new))
            near = np.nonzero(E_new > mx * (1.0 - delta_frac))[0]
            if dist is not None:
                dmax = max(dist(cur.slices[j]) for j in near)
            else:
                # fixed-point residual of the previous iterate
                dmax = max(lp.w12_distance(prev.slices[j], cur.slices[j]) for j in near)
            report.max_energies.append(mx)
            report.argmax_t.append(float(s.t_grid[i]))
            report.near_max_counts.append(int(len(near)))
            report.max_dist_to_G.append(float(dmax))
            E = E_new
            if keep_every and it % keep_every == 0:
                history.append(cur)
            quiet = quiet + 1 if change < rel_tol else 0
            report.iterations = it
            if quiet >= patience:
                report.stop_reason = "plateau"
                break
        else:
            report.stop_reason = "iteration cap"
    finally:
        if pool is not None:
            pool.shutdown()
    if history[-1] is not cur:
        history.append(cur)
    report.width_estimate = float(E.max())
    report.near_max = [(float(t), float(e), float(d)) for t, e, d in
                       _near_max(cur, report.width_estimate, delta_frac * report.width_estimate)]
    return history, report


def _near_max(s, W, delta):
    out = []
    for t, c in zip(s.t_grid, s.slices):
        if bk._is_point(c):
            continue
        e = lp.energy(c)
        if e > W - delta:
            out.append((t, e, bk.dist_to_geodesics(c)))
    return out


def almost_maximal_slices(s, report, delta):
    """Slices with Length^2 > 2 pi (W - delta), paired with their dist-to-G surrogate."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return [(t, d) for t, _, d in _near_max(s, report.width_estimate, delta)]


def holder_check(s, W):
    """Max over slices and sampled pairs of |s(x) - s(y)|^2 / (|x - y| (W + 1)); <= 1 is the bound."""
    worst = 0.0
    for c in s.slices:
        X = c.points
        for k in (1, 4, 16, c.n // 4, c.n // 2):
            if k <= 0 or k >= c.n:
                continue
            d2 = np.sum((np.roll(X, -k, axis=0) - X) ** 2, axis=1)
            gap = min(k, c.n - k) * c.h
            worst = max(worst, float(d2.max() / (gap * (W + 1.0))))
    return worst


def adjacent_continuity(s):
    """Max W^{1,2} distance between neighbouring slices."""
    return max(lp.w12_distance(a, b) for a, b in zip(s.slices[:-1], s.slices[1:]))


def width(surface, config=None):
    """Width of ``surface``: normalize, sweep out, replace, tighten.

    ``config.noise`` is an amplitude in the surface's original units.

    Returns (report, final_sweepout).
    """
    cfg = config if isinstance(config, WidthConfig) else WidthConfig.from_dict(config)
    scaled, factor = normalize_scaling(surface)
    s = initial_sweepout(scaled, cfg.M_slices, cfg.L, cfg.m)
    if cfg.noise:
        s = perturbed_sweepout(s, cfg.noise * factor, cfg.seed)
    s = pl_replace(s)
    history, report = tighten(s, cfg.iterations, cfg.rel_tol, cfg.patience, cfg.delta_frac,
                              cfg.jobs, scale=factor, watch=cfg.watch)
    return report, history[-1]


def write_tightening_csv(path, report):
    lines = ["iteration,max_energy,argmax_t,near_max_count,max_dist_to_G"]
    for i, (e, t, k, d) in enumerate(zip(report.max_energies, report.argmax_t,
                                         report.near_max_counts, report.max_dist_to_G), 1):
        lines.append(f"{i},{e:.17g},{t:.17g},{k},{d:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_snapshot(path, s):
    """One curve-dump block per slice, each preceded by a '# t=' header."""
    with open(path, "w") as fh:
        for t, c in zip(s.t_grid, s.slices):
            fh.write(f"# t={t:.17g}\n")
            lp.write_curve_csv(fh, c)
