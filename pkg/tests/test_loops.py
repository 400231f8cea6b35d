import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from widthflow import birkhoff as bk
from widthflow import geom
from widthflow import loops as lp
from widthflow.loops import TWO_PI, LoopCurve


def equator(surface, n, L, phase=lambda th: th):
    th = phase(TWO_PI * np.arange(n) / n)
    R = surface.radius
    return LoopCurve(R * np.column_stack([np.cos(th), np.sin(th), np.zeros(n)]), L, surface)


def two_speed(th):
    # speed 2 on [0, pi/2], speed 2/3 on [pi/2, 2 pi]
    return np.where(th <= np.pi / 2, 2 * th, np.pi + (th - np.pi / 2) * 2 / 3)


@pytest.fixture(scope="module")
def corpus(sphere):
    return [c for c, _ in bk.random_corpus(sphere, 40, seed=3)]


def test_two_speed_equator_reparametrization():
    s = geom.Sphere(radius=1.0)
    c = equator(s, 256, 4, two_speed)
    assert lp.energy(c) == pytest.approx(8 * np.pi / 3, rel=1e-12)
    assert lp.length(c) == pytest.approx(TWO_PI, rel=1e-12)
    out = lp.reparametrize_constant_speed(c)
    assert lp.energy(out) == pytest.approx(TWO_PI, rel=1e-12)
    assert np.ptp(lp.speed_profile(out)) < 1e-12
    pm = bk.reparam_map(c, out)
    assert pm.defect == pytest.approx(2 * np.pi / 3, rel=1e-9)


def test_reparametrization_is_idempotent(corpus):
    for c in corpus[:5]:
        once = lp.reparametrize_constant_speed(c)
        twice = lp.reparametrize_constant_speed(once)
        assert np.abs(once.points - twice.points).max() < 1e-9
        assert lp.energy(once) == pytest.approx(lp.energy(twice), rel=1e-12)


def test_point_curve_is_total(sphere):
    p = sphere.project(np.array([[0.0, 0.0, 1.0]]))[0]
    c = LoopCurve.constant(p, 24, 32, sphere)
    assert lp.energy(c) == 0.0 and lp.length(c) == 0.0
    assert np.array_equal(lp.reparametrize_constant_speed(c).points, c.points)
    assert np.array_equal(lp.linear_replacement(c, "even").points, c.points)
    assert np.array_equal(bk.psi(c).output.points, c.points)


def test_cauchy_schwarz_on_corpus(corpus):
    for c in corpus:
        assert lp.length(c) ** 2 <= TWO_PI * lp.energy(c) * (1 + 1e-12)
        # corpus members are constant speed: equality
        assert lp.length(c) ** 2 == pytest.approx(TWO_PI * lp.energy(c), rel=1e-10)


@given(st.floats(0.05, 0.9), st.integers(1, 5))
def test_cauchy_schwarz_strict_off_constant_speed(a, k):
    s = geom.Sphere(radius=1.0)
    c = equator(s, 256, 4, lambda th: th + a / k * np.sin(k * th))
    assert lp.length(c) ** 2 < TWO_PI * lp.energy(c)
    assert not lp.lambda_diagnostics(c)["constant_speed_ok"]


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=12))
def test_wirtinger_on_band_limited_functions(coef):
    n = 2048
    th = TWO_PI * np.arange(n + 1) / n
    f = sum(a * np.sin((k + 1) * th / 2) for k, a in enumerate(coef))
    h = TWO_PI / n
    lhs = h * np.sum(f[:-1] ** 2)
    rhs = 4 * np.sum(np.diff(f) ** 2) / h
    # forward differences damp the extremal mode sin(t/2) by sinc(h/4)^2
    damp = np.sinc(h / 4 / np.pi) ** 2
    assert lhs <= rhs / damp * (1 + 1e-12)


@pytest.mark.parametrize("name", ["sphere", "ellipsoid"])
def test_arc_replacement_bound_explicit_constant(name, request):
    surf = request.getfixturevalue(name)
    rng = np.random.default_rng(11)
    L = 24
    span = TWO_PI / L
    s = np.linspace(0, 1, 33)[:, None]
    checked = 0
    while checked < 1000:
        p = surf.random_points(rng, 1)[0]
        q = surf.project((p + rng.standard_normal(3) * rng.uniform(0.2, 2.5))[None])[0]
        geo = surf.geodesic_chain(p[None], q[None], 32)[0]
        k = rng.integers(1, 5)
        pts = surf.project(geo + np.sin(np.pi * k * s) * rng.standard_normal(3) * rng.uniform(1e-3, 0.5))
        if np.linalg.norm(np.diff(pts, axis=0), axis=1).sum() > TWO_PI:
            continue  # violates |sigma'| <= L on an interval of length 2 pi / L
        r = lp.arc_replacement_check(surf, pts, span)
        assert r["deriv_sq"] <= 2 * r["gap"]
        assert r["dist_sq"] <= (1 + (span / np.pi) ** 2) * 2 * r["gap"]
        checked += 1


def test_wiggled_equator_loses_its_wiggle(sphere):
    L, m = 24, 32
    n = 2 * L * m
    c = equator(sphere, n, L)
    th = c.params
    bump = np.where((th > 0.02) & (th < 2 * np.pi / L - 0.02), np.sin(th * L / 2) ** 4, 0.0)
    wig = sphere.project(c.points + 0.3 * bump[:, None] * np.array([0, 0, 1.0]))
    w = LoopCurve(wig, L, sphere)
    out = lp.linear_replacement(w, "even")
    assert lp.energy(out) < lp.energy(w)
    assert np.abs(out.points[:, 2]).max() < 1e-9


def test_linear_replacement_fixes_geodesics_and_is_idempotent(sphere, corpus):
    c = equator(sphere, 2 * 24 * 32, 24)
    assert np.abs(lp.linear_replacement(c, "even").points - c.points).max() < 1e-9
    for parity in ("even", "odd"):
        once = lp.linear_replacement(corpus[0], parity)
        twice = lp.linear_replacement(once, parity)
        assert np.abs(once.points - twice.points).max() < 1e-9


@given(st.integers(0, 39), st.sampled_from(["even", "odd"]))
def test_replacement_never_increases_energy(corpus, i, parity):
    c = corpus[i]
    out = lp.linear_replacement(c, parity)
    assert lp.energy(out) <= lp.energy(c) * (1 + 1e-12)
    assert lp.length(out) <= lp.length(c) * (1 + 1e-12)


def test_replacement_breaks(corpus):
    c = corpus[1]
    ge = lp.linear_replacement(c, "even")
    assert ge.break_params.size == c.L
    assert np.allclose(ge.break_params, np.pi / c.L * 2 * np.arange(c.L))
    out = bk.psi(c).output
    assert out.break_params.size == c.L
    assert lp.in_lambda(out, tol=1e-6)


def test_replacement_rejects_far_endpoints(sphere):
    L = 2
    c = equator(sphere, 2 * L * 32, L)
    with pytest.raises(geom.GeodesicError, match="segment"):
        lp.linear_replacement(c, "even")


def test_mixed_batched_replacement_matches_single(corpus):
    many = lp.linear_replacement_many(corpus[:4], "even")
    for c, b in zip(corpus[:4], many):
        one = lp.linear_replacement(c, "even")
        assert np.abs(one.points - b.points).max() < 1e-8


@given(st.integers(0, 39), st.integers(0, 39), st.integers(0, 39))
def test_w12_is_a_metric(corpus, i, j, k):
    a, b, c = corpus[i], corpus[j], corpus[k]
    assert lp.w12_distance(a, a) == 0.0
    assert lp.w12_distance(a, b) == pytest.approx(lp.w12_distance(b, a))
    assert lp.w12_distance(a, c) <= lp.w12_distance(a, b) + lp.w12_distance(b, c) + 1e-9


def test_w12_of_rotation_on_unit_sphere():
    s = geom.Sphere(radius=1.0)
    n = 4096
    a = equator(s, n, 4)
    b = equator(s, n, 4, lambda th: th + 0.1)
    # |a - b| = 2 sin(0.05) pointwise, and the same for the derivatives
    d = 2 * np.sin(0.05)
    assert lp.w12_distance(a, b) == pytest.approx(np.sqrt(2 * TWO_PI) * d, rel=1e-5)


def test_arclength_and_evaluate_agree(corpus):
    c = corpus[2]
    th = np.linspace(0, TWO_PI, 7, endpoint=False)
    s = c.arclength_at(th)
    assert s[0] == 0.0
    assert np.allclose(s, lp.length(c) * th / TWO_PI, rtol=1e-9)
    assert np.allclose(c.evaluate(c.params[:10]), c.points[:10])


def test_curve_csv_round_trip(tmp_path, corpus, sphere):
    c = bk.psi(corpus[3]).output
    path = tmp_path / "c.csv"
    lp.write_curve_csv(str(path), c)
    head = path.read_text().splitlines()[0]
    assert head.startswith("# L=") and "energy=" in head and "speed=" in head
    back = lp.read_curve_csv(str(path), sphere)
    assert np.array_equal(back.points, c.points)
    assert np.array_equal(back.break_params, c.break_params)
    assert lp.energy(back) == lp.energy(c)
    buf = io.StringIO()
    lp.write_curve_csv(buf, c)
    assert buf.getvalue() == path.read_text()


def test_bad_sample_count():
    with pytest.raises(lp.CurveError):
        LoopCurve(np.zeros((10, 3)), 4)
