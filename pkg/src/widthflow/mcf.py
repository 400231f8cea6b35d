"""Mean curvature flow and H^k flows of convex surfaces, and the width decay.

Round spheres evolve by their closed-form radius. Surfaces of revolution are
evolved as a radial graph r(phi, t) over the polar angle,

    r_t = -H^k sqrt(r^2 + r_phi^2) / r,

with second-order differences, even reflection across both poles and Heun
time stepping. Material points (the flow map) are tracked by their polar
angle, which moves by phi_t = -r_t r_phi / (r^2 + r_phi^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import loops as lp
from . import sweepout as sw
from .geom import AxisymmetricSurface, Ellipsoid, Sphere
from .loops import TWO_PI, LoopCurve

DIM = 2  # surfaces in R^3
CFL = 0.2
EXTINCTION_TOL = 1e-8


class FlowError(RuntimeError):
    pass


@dataclass(frozen=True)
class FlowState:
    time: float
    surface_: object
    k: float = 1.0
    radii: np.ndarray = None  # profile samples (surfaces of revolution)
    tracer_phi: np.ndarray = None  # current polar angles of material points
    extinct: bool = False

    @property
    def surface(self):
        # profile surfaces are built on first use; most flow steps never need one
        if self.surface_ is None:
            object.__setattr__(self, "surface_", AxisymmetricSurface(radii=self.radii))
        return self.surface_

    @property
    def is_sphere(self):
        return self.radii is None


def as_flowable(surface, profile_samples=256):
    """Spheres stay spheres; ellipsoids with two equal semi-axes become
    surfaces of revolution about the remaining axis."""
    if isinstance(surface, Ellipsoid):
        a = sorted(surface.axes)
        ax = list(surface.axes)
        if a[0] == a[2]:
            return Sphere(radius=a[0])
        for i in range(3):
            others = [ax[j] for j in range(3) if j != i]
            if others[0] == others[1]:
                return AxisymmetricSurface.ellipsoid(others[0], ax[i], n=profile_samples)
        raise FlowError("flow supports ellipsoids of revolution only")
    return surface


def initial_state(surface, k=1.0):
    if k <= 0:
        raise ValueError("the H^k flow needs k > 0")
    if isinstance(surface, Sphere):
        return FlowState(0.0, surface, k)
    if isinstance(surface, AxisymmetricSurface):
        r = surface.radii.copy()
        return FlowState(0.0, surface, k, r, np.linspace(0.0, np.pi, r.size))
    raise FlowError(f"flow is implemented for spheres and surfaces of revolution, not {surface.kind}")


# -- spheres ----------------------------------------------------------------

def _sphere_radius_power(r, dt, k):
    """r^{k+1} after time dt of dr/dt = -(n/r)^k."""
    if k == 1:
        return r * r - 2.0 * DIM * dt
    return r ** (k + 1) - (k + 1) * DIM**k * dt


def _sphere_step(state, dt, k):
    r = state.surface.radius
    p = _sphere_radius_power(r, dt, k)
    if p <= 0.0:
        t_ext = state.time + _sphere_radius_power(r, 0.0, k) / ((k + 1) * DIM**k)
        return replace(state, time=t_ext, extinct=True)
    r_new = math.sqrt(p) if k == 1 else p ** (1.0 / (k + 1))
    return replace(state, time=state.time + dt, surface_=Sphere(radius=r_new), k=k)


# -- surfaces of revolution -------------------------------------------------

def _profile_derivatives(r):
    n = r.size - 1
    h = np.pi / n
    full = np.concatenate([r, r[-2:0:-1]])
    rp = np.roll(full, -1)
    rm = np.roll(full, 1)
    r1 = ((rp - rm) / (2.0 * h))[: n + 1]
    r2 = ((rp - 2.0 * full + rm) / (h * h))[: n + 1]
    return r1, r2, h


def profile_curvatures(r):
    """Meridian and parallel principal curvatures of the radial graph ``r``."""
    r1, r2, h = _profile_derivatives(r)
    phi = np.linspace(0.0, np.pi, r.size)
    g = r * r + r1 * r1
    k1 = (r * r + 2.0 * r1 * r1 - r * r2) / g**1.5
    s = np.sin(phi)
    k2 = np.empty_like(k1)
    inner = slice(1, -1)
    k2[inner] = (r[inner] * s[inner] - r1[inner] * np.cos(phi[inner])) / (np.sqrt(g[inner]) * r[inner] * s[inner])
    k2[0], k2[-1] = k1[0], k1[-1]
    return k1, k2


def _profile_rate(r, k):
    r1, _, _ = _profile_derivatives(r)
    k1, k2 = profile_curvatures(r)
    H = k1 + k2
    if np.any(k1 <= 0.0) or np.any(k2 <= 0.0):
        raise FlowError("profile lost strict convexity")
    rt = -(H**k) * np.sqrt(r * r + r1 * r1) / r
    return rt, r1, H


def stable_dt(state):
    if state.is_sphere:
        return np.inf
    r = state.radii
    _, _, H = _profile_rate(r, state.k)
    h = np.pi / (r.size - 1)
    diff = state.k * np.max(H ** (state.k - 1.0) / (r * r))
    return CFL * h * h / diff


def _tracer_rate(phi, tr, rt, r, r1):
    grid = np.linspace(0.0, np.pi, r.size)
    rt_i = np.interp(tr, grid, rt)
    r_i = np.interp(tr, grid, r)
    r1_i = np.interp(tr, grid, r1)
    return -rt_i * r1_i / (r_i * r_i + r1_i * r1_i)


def _profile_step(state, dt, k):
    r0, tr0 = state.radii, state.tracer_phi
    grid = np.linspace(0.0, np.pi, r0.size)
    a, r1a, _ = _profile_rate(r0, k)
    ta = _tracer_rate(grid, tr0, a, r0, r1a)
    r_pred = r0 + dt * a
    if np.any(r_pred <= 0.0):
        raise FlowError("profile reached the origin")
    b, r1b, _ = _profile_rate(r_pred, k)
    tb = _tracer_rate(grid, tr0 + dt * ta, b, r_pred, r1b)
    r_new = r0 + 0.5 * dt * (a + b)
    tr_new = np.clip(tr0 + 0.5 * dt * (ta + tb), 0.0, np.pi)
    k1, k2 = profile_curvatures(r_new)
    if np.any(k1 <= 0.0) or np.any(k2 <= 0.0):
        raise FlowError("profile lost strict convexity")
    return replace(state, time=state.time + dt, surface_=None, radii=r_new, tracer_phi=tr_new, k=k)


def hk_step(state, dt, k):
    """Advance by z_t = |H|^k (inward unit normal) for time ``dt``."""
    if k <= 0:
        raise ValueError("the H^k flow needs k > 0")
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if state.extinct:
        raise FlowError("surface is already extinct")
    if dt == 0:
        return state
    if state.is_sphere:
        return _sphere_step(state, dt, k)
    limit = stable_dt(replace(state, k=k))
    if dt > limit * (1.0 + 1e-12):
        raise FlowError(f"dt = {dt:.3g} exceeds the stability bound {limit:.3g}")
    return _profile_step(state, dt, k)


def mcf_step(state, dt):
    """Advance by mean curvature flow z_t = H(z) for time ``dt``."""
    return hk_step(state, dt, 1)


@dataclass
class FlowHistory:
    states: list = field(default_factory=list)
    k: float = 1.0
    dt_max: float = None

    @property
    def times(self):
        return np.array([s.time for s in self.states])

    def state_at(self, t):
        """State at exactly time ``t`` (stepping from the last recorded state before t)."""
        times = self.times
        if t < times[0] - 1e-15:
            raise ValueError("time precedes the history")
        i = int(np.searchsorted(times, t, side="right") - 1)
        st = self.states[i]
        if self.extinct_at is not None and t >= self.extinct_at:
            raise FlowError(f"time {t:.6g} is at or past extinction")
        if st.time == t:
            return st
        return advance(st, t, self.dt_max)

    @property
    def extinct_at(self):
        last = self.states[-1]
        return last.time if last.extinct else None


def advance(state, t_target, dt_max=None):
    """Substep from ``state`` to time ``t_target``."""
    st = state
    while st.time < t_target and not st.extinct:
        dt = min(t_target - st.time, stable_dt(st))
        if dt_max:
            dt = min(dt, dt_max)
        st = hk_step(st, dt, st.k)
    if st.extinct and st.time <= t_target:
        raise FlowError(f"flow became extinct at t = {st.time:.10g} before {t_target:.10g}")
    return st


def flow(surface0, t_end, k=1.0, dt_max=None):
    """Run the flow to ``t_end`` (or extinction), recording every accepted step."""
    st = initial_state(as_flowable(surface0), k)
    hist = FlowHistory([st], k, dt_max)
    if st.is_sphere:
        hist.states.append(hk_step(st, t_end, k))
        return hist
    while st.time < t_end:
        dt = min(t_end - st.time, stable_dt(st))
        if dt_max:
            dt = min(dt, dt_max)
        st = hk_step(st, dt, k)
        hist.states.append(st)
    return hist


def extinction_time(surface0, k=1.0, tol=EXTINCTION_TOL, dt_max=None):
    """First time the surface disappears.

    Spheres: bisection on the step-rejection boundary (a single exact step
    from 0 succeeds iff t < T). Surfaces of revolution: flow until the
    profile is small and nearly round, then extrapolate with the round-point
    law r^{k+1} = (k+1) n^k (T - t).
    """
    st0 = initial_state(as_flowable(surface0), k)
    if st0.is_sphere:
        lo, hi = 0.0, 1.0
        while not hk_step(st0, hi, k).extinct:
            lo, hi = hi, 2.0 * hi
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if hk_step(st0, mid, k).extinct:
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)
    st = st0
    r0 = float(st.radii.max())
    while st.radii.max() > 0.2 * r0:
        dt = stable_dt(st)
        if dt_max:
            dt = min(dt, dt_max)
        st = hk_step(st, dt, k)
    rbar = float(np.mean(st.radii))
    return st.time + rbar ** (k + 1) / ((k + 1) * DIM**k)


# -- transport and first variation -----------------------------------------

def transport_curve(history, c, t0, t1):
    """Push the samples of ``c`` (on the time-t0 surface) along the flow to t1."""
    if t1 < t0:
        raise ValueError("transport runs forward in time")
    ext = history.extinct_at
    if ext is not None and t1 >= ext:
        raise FlowError("target time is at or past extinction")
    s0 = history.state_at(t0)
    if t1 == t0:
        return c
    s1 = history.state_at(t1)
    if s0.is_sphere:
        pts = c.points * (s1.surface.radius / s0.surface.radius)
    else:
        phi, ex, ey = s0.surface._meridian(c.points)
        grid = np.linspace(0.0, np.pi, s0.radii.size)
        phi_init = np.interp(phi, s0.tracer_phi, grid)
        phi_new = np.interp(phi_init, grid, s1.tracer_phi)
        pts = s1.surface._point(phi_new, ex, ey)
    return LoopCurve(pts, c.L, s1.surface, None, None)


def curve_curvature(c):
    """Curvature vectors and arclength weights of the closed polygon through the samples.

    The magnitude at each vertex is the turning angle divided by the dual
    length, so the total curvature sums turning angles exactly.
    """
    X = c.points
    fwd = np.roll(X, -1, axis=0) - X
    lf = np.linalg.norm(fwd, axis=1)
    if np.any(lf == 0.0):
        raise ValueError("curve has repeated samples (zero length segment)")
    tf = fwd / lf[:, None]
    tb = np.roll(tf, 1, axis=0)
    lb = np.roll(lf, 1)
    ds = 0.5 * (lf + lb)
    diff = tf - tb
    dn = np.linalg.norm(diff, axis=1)
    ang = 2.0 * np.arcsin(np.clip(0.5 * dn, 0.0, 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        direction = np.where(dn[:, None] > 0.0, diff / np.where(dn > 0.0, dn, 1.0)[:, None], 0.0)
    kappa = direction * (ang / ds)[:, None]
    return kappa, ds, ang


def total_curvature(c):
    """Total curvature of the closed curve (sum of turning angles)."""
    if lp.length(c) == 0.0:
        raise ValueError("total curvature of a zero-length curve is undefined")
    return float(curve_curvature(c)[2].sum())


def planarity_residual(c):
    """Max distance to the best-fit plane, divided by the length."""
    X = c.points - c.points.mean(axis=0)
    _, _, vt = np.linalg.svd(X, full_matrices=False)
    return float(np.abs(X @ vt[-1]).max() / lp.length(c))


def flow_velocity(surface, pts, k=1.0):
    """Normal velocity |H|^k times the inward unit normal (the mean curvature vector for k = 1)."""
    kap = surface.principal_curvatures(pts)
    H = kap.sum(axis=-1)
    return -(np.abs(H) ** k)[:, None] * surface.normal(pts)


def _require_geodesic(c, tol):
    kappa, _, _ = curve_curvature(c)
    nrm = c.surface.normal(c.points)
    tang = kappa - np.einsum("ki,ki->k", kappa, nrm)[:, None] * nrm
    scale = float(np.linalg.norm(kappa, axis=1).mean()) + 1.0 / lp.length(c)
    res = float(np.linalg.norm(tang, axis=1).max() / scale)
    if res > tol:
        raise ValueError(f"curve is not a geodesic (relative tangential curvature {res:.3e})")


def length_rate(history, c, t, k=None, geodesic_tol=1e-3):
    """d/dt Length along the flow: -sum <H_Sigma, V> ds."""
    st = history.state_at(t)
    c = c if c.surface is st.surface else LoopCurve(c.points, c.L, st.surface)
    _require_geodesic(c, geodesic_tol)
    kappa, ds, _ = curve_curvature(c)
    V = flow_velocity(st.surface, c.points, history.k if k is None else k)
    return float(-np.sum(np.einsum("ki,ki->k", kappa, V) * ds)), kappa, ds


def first_variation_length(history, geodesic, t):
    """d/dt of the length of the transported geodesic: -int <H_Sigma, H_M>."""
    return length_rate(history, geodesic, t, k=1.0)[0]


@dataclass
class DecayChain:
    value: float
    terms: dict
    holds: bool


def energy_decay_estimate(history, geodesic, t, rtol=1e-6):
    """d/dt Energy = (V0 / pi) dV/dt, with the chain
    V0 dV/dt <= -V0 int|H|^2 <= -(int|H|)^2 <= -4 pi^2 checked term by term."""
    dV, kappa, ds = length_rate(history, geodesic, t, k=1.0)
    V0 = float(ds.sum())
    kn = np.linalg.norm(kappa, axis=1)
    a = V0 * dV
    b = -V0 * float(np.sum(kn * kn * ds))
    c = -float(np.sum(kn * ds)) ** 2
    d = -4.0 * np.pi**2
    tol = rtol * abs(d)
    ok = a <= b + tol and b <= c + tol and c <= d + tol
    return DecayChain(V0 * dV / np.pi, {"V0_dV": a, "minus_V0_int_H2": b, "minus_int_H_sq": c,
                                       "minus_4pi2": d}, bool(ok))


def power_flow_inequality_check(history, geodesic, t, k):
    """(lhs, rhs) = (V0^k dV/dt under the H^k flow, -(2 pi)^{k+1})."""
    dV, _, ds = length_rate(history, geodesic, t, k=k)
    V0 = float(ds.sum())
    return V0**k * dV, -((TWO_PI) ** (k + 1))


def variation_perturbation_gap(history, c1, c2, t, dt=1e-5):
    """|d/dt Energy(c1_t) - d/dt Energy(c2_t)|, by forward differences of the
    energies of the curves transported from t to t + dt."""
    if c1 is c2:
        return 0.0
    surf = history.state_at(t).surface

    def rate(c):
        moved = transport_curve(history, c, t, t + dt)
        return (lp.energy(moved) - lp.energy(LoopCurve(c.points, c.L, surf))) / dt

    return abs(rate(c1) - rate(c2))


# -- cylinder (analytic) ----------------------------------------------------

def cylinder_checks(r0=1.0):
    """Closed-form cross-section of a shrinking cylinder: d(r^2)/dt = -2."""
    W0 = TWO_PI * r0 * r0
    slope = TWO_PI * -2.0  # dW/dt = 2 pi d(r^2)/dt
    t_ext = r0 * r0 / 2.0
    dV = -TWO_PI * r0 * (1.0 / r0) * (1.0 / r0)
    decay = (TWO_PI * r0 / np.pi) * dV
    return {"W0": W0, "slope": slope, "t_ext": t_ext, "W0_over_4pi": W0 / (4.0 * np.pi),
            "energy_decay": decay}


# -- width decay experiment -------------------------------------------------

@dataclass
class DecaySeries:
    times: np.ndarray
    W: np.ndarray  # original units
    W_scaled: np.ndarray
    quotients: np.ndarray
    extinction: float
    extinction_bound: float
    argmax_t: list = field(default_factory=list)
    total_curvature_argmax: list = field(default_factory=list)
    planarity: list = field(default_factory=list)
    truncated: bool = False
    rigidity_ok: bool = True
    reports: list = field(default_factory=list)

    def rows(self):
        out = []
        for i, t in enumerate(self.times):
            q = self.quotients[i] if i < len(self.quotients) else float("nan")
            out.append((t, self.W[i], self.W_scaled[i], q, -4.0 * np.pi, self.argmax_t[i],
                        self.total_curvature_argmax[i], self.planarity[i]))
        return out


def write_decay_csv(path, series):
    lines = ["t,W_original_units,W_scaled,quotient,bound_minus4pi,argmax_t,"
             "total_curvature_argmax,planarity_residual"]
    for row in series.rows():
        lines.append(",".join(f"{v:.17g}" for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def width_decay_experiment(surface0, t_samples, flow_kind="mcf", k=1.0, width_config=None,
                           dt_max=None):
    """W(t) by fresh tightening on the flowed surface at each sampled time.

    Tightening stops once the maximal slice energy plateaus unless
    ``width_config`` sets ``watch`` itself.
    """
    if isinstance(width_config, sw.WidthConfig):
        wcfg = width_config
    else:
        wcfg = sw.WidthConfig.from_dict({"watch": "max", **(width_config or {})})
    if flow_kind == "mcf":
        k = 1.0
    elif flow_kind != "hk":
        raise ValueError(f"unknown flow {flow_kind!r}")
    t_samples = np.sort(np.asarray(t_samples, dtype=float))
    ext = extinction_time(surface0, k, dt_max=dt_max)
    truncated = bool(np.any(t_samples >= ext))
    ts = t_samples[t_samples < ext]
    hist = flow(surface0, float(ts.max()), k, dt_max)
    Ws, Wsc, amt, tc, pl, reps = [], [], [], [], [], []
    for t in ts:
        st = hist.state_at(float(t))
        rep, swp = sw.width(st.surface, wcfg)
        Ws.append(rep.width_original)
        Wsc.append(rep.width_estimate)
        i = int(np.argmax(swp.energies()))
        top = swp.slices[i]
        amt.append(float(swp.t_grid[i]))
        tc.append(total_curvature(top))
        pl.append(planarity_residual(top))
        reps.append(rep)
    Ws = np.array(Ws)
    q = np.diff(Ws) / np.diff(ts)
    rigid = True
    for i, qi in enumerate(q):
        if abs(qi + 4.0 * np.pi) <= 0.01 * 4.0 * np.pi:
            rigid &= abs(tc[i] - TWO_PI) <= 0.01 * TWO_PI and pl[i] <= 0.02
    return DecaySeries(ts, Ws, np.array(Wsc), q, ext, Ws[0] / (4.0 * np.pi) if len(Ws) else np.nan,
                       amt, tc, pl, truncated, bool(rigid), reps)
