import numpy as np
import pytest

from widthflow import birkhoff as bk
from widthflow import geom
from widthflow import loops as lp
from widthflow import sweepout as sw

TWO_PI = 2 * np.pi


@pytest.fixture(scope="module")
def sphere_sweep(sphere):
    return sw.initial_sweepout(sphere, 16)


@pytest.fixture(scope="module")
def replaced(sphere_sweep):
    return sw.pl_replace(sphere_sweep)


def test_initial_sphere_sweepout_is_latitudes(sphere, sphere_sweep):
    s = sphere_sweep
    assert s.homotopy_tag == "degree-one"
    assert lp.length(s.slices[0]) == 0.0 and lp.length(s.slices[-1]) == 0.0
    E = s.energies()
    mid = len(s.t_grid) // 2
    assert s.t_grid[mid] == 0.0
    assert int(np.argmax(E)) == mid
    assert E[mid] == pytest.approx(TWO_PI * sphere.radius**2, rel=1e-12)
    z = s.slices[5].points[:, 2]
    assert np.ptp(z) < 1e-9


def test_ellipsoid_sweepout_peaks_at_center_cut(ellipsoid):
    s = sw.initial_sweepout(ellipsoid, 16)
    E = s.energies()
    assert abs(s.t_grid[int(np.argmax(E))]) <= 0.125
    assert np.all(E[1:-1] > 0)


def test_minimal_sweepout():
    s = sw.initial_sweepout(geom.Sphere(radius=30.0), 2)
    assert len(s.slices) == 3
    assert s.energies()[1] > 0 and s.energies()[0] == 0
    with pytest.raises(ValueError):
        sw.initial_sweepout(geom.Sphere(radius=30.0), 1)


def test_pl_replace(sphere_sweep, replaced):
    E0, E1 = sphere_sweep.energies(), replaced.energies()
    assert np.all(E1 <= E0 * (1 + 1e-12))
    mid = len(E0) // 2
    assert lp.w12_distance(sphere_sweep.slices[mid], replaced.slices[mid]) < 1e-8
    assert np.array_equal(replaced.slices[0].points, sphere_sweep.slices[0].points)
    again = sw.pl_replace(replaced)
    for a, b in zip(replaced.slices, again.slices):
        assert lp.w12_distance(a, b) < 1e-8
    for c in replaced.slices[1:-1]:
        assert lp.in_lambda(c, tol=1e-6)


def test_tighten_short_run(replaced, sphere):
    hist, rep = sw.tighten(replaced, iterations=5, patience=100)
    assert rep.iterations == 5 and rep.stop_reason == "iteration cap"
    assert np.all(np.diff(rep.max_energies) <= 1e-12 * rep.max_energies[0])
    final = hist[-1]
    assert np.array_equal(final.slices[0].points, replaced.slices[0].points)
    mid = len(final.slices) // 2
    assert lp.energy(final.slices[mid]) == pytest.approx(TWO_PI * sphere.radius**2, rel=1e-8)
    assert rep.width_estimate == pytest.approx(TWO_PI * sphere.radius**2, rel=1e-8)
    E_before, E_after = replaced.energies(), final.energies()
    assert np.all(E_after <= E_before * (1 + 1e-12))


def test_almost_maximal_filter_semantics(replaced):
    hist, rep = sw.tighten(replaced, iterations=2, patience=100)
    s = hist[-1]
    everything = sw.almost_maximal_slices(s, rep, 2 * rep.width_estimate)
    assert len(everything) == len(s.slices) - 2
    only = sw.almost_maximal_slices(s, rep, 1e-9 * rep.width_estimate)
    assert len(only) == 1 and only[0][0] == 0.0 and only[0][1] < 1e-8
    with pytest.raises(ValueError):
        sw.almost_maximal_slices(s, rep, 0.0)


def test_holder_continuity_and_adjacent_slices(replaced):
    W = replaced.energies().max()
    assert sw.holder_check(replaced, W) <= 1.0
    assert np.isfinite(sw.adjacent_continuity(replaced))


def test_tightening_artifacts(tmp_path, replaced):
    _, rep = sw.tighten(replaced, iterations=3, patience=100)
    sw.write_tightening_csv(tmp_path / "t.csv", rep)
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert rows[0] == "iteration,max_energy,argmax_t,near_max_count,max_dist_to_G"
    assert len(rows) == 4
    sw.write_snapshot(tmp_path / "s.txt", replaced)
    text = (tmp_path / "s.txt").read_text()
    assert text.count("# t=") == len(replaced.slices)


def test_admissible_L():
    assert sw.admissible_L(np.array([22.7]), 16) == 23
    assert sw.admissible_L(np.array([22.7]), 40) == 40
    assert sw.admissible_L(np.array([3.0]), "auto") == 4


@pytest.mark.slow
def test_width_scales_with_radius_squared():
    rep, _ = sw.width(geom.Sphere(radius=2.0))
    assert rep.width_original == pytest.approx(8 * np.pi, rel=0.01)
    assert rep.width_original > 0.1 * 8 * np.pi


@pytest.mark.slow
def test_noisy_sweepout_reaches_same_width():
    clean, _ = sw.width(geom.Sphere(radius=1.0))
    noisy, _ = sw.width(geom.Sphere(radius=1.0), {"noise": 0.1 / 23.76, "seed": 4})
    assert noisy.width_original == pytest.approx(clean.width_original, rel=0.01)


@pytest.mark.slow
def test_nearly_round_ellipsoid_width_is_continuous():
    rep, _ = sw.width(geom.Ellipsoid(axes=(1.0, 1.0, 1.001)))
    assert rep.width_original == pytest.approx(TWO_PI, rel=0.01)


def test_watching_only_the_max_stops_at_patience(replaced):
    _, rep = sw.tighten(replaced, iterations=50, patience=3, watch="max")
    assert rep.stop_reason == "plateau" and rep.iterations == 3
    with pytest.raises(ValueError, match="watch"):
        sw.tighten(replaced, iterations=1, watch="slices")
