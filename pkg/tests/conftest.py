import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from widthflow import geom

settings.register_profile(
    "default", max_examples=25, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")


@pytest.fixture(scope="session")
def sphere():
    return geom.normalize_scaling(geom.Sphere(radius=1.0))[0]


@pytest.fixture(scope="session")
def ellipsoid():
    return geom.normalize_scaling(geom.Ellipsoid(axes=(1.5, 1.0, 0.8)))[0]


@pytest.fixture(scope="session")
def axisym():
    return geom.normalize_scaling(geom.AxisymmetricSurface.ellipsoid(1.0, 1.2))[0]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record one acceptance verdict, print it, then assert it."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
