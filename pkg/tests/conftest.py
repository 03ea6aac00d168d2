import functools

import numpy as np
import pytest

from conflab import SpherePoint, make_cylinder_sphere, make_flat_neck_sphere, make_round


# criterion number -> PASS/FAIL line, filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in range(1, 14):
        terminalreporter.write_line(ACCEPTANCE.get(number, f"criterion {number:2d} NOT RUN"))


@pytest.fixture(scope="session")
def round_metric():
    return make_round()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_points(rng, count):
    v = rng.normal(size=(count, 3))
    return [SpherePoint(*row) for row in v]


@functools.lru_cache(maxsize=None)
def cylinder(k, n=257):
    return make_cylinder_sphere(k, n)


@functools.lru_cache(maxsize=None)
def flat_neck(k, n=257):
    return make_flat_neck_sphere(k, n)


@functools.lru_cache(maxsize=None)
def cylinder_profile(k, n=257):
    from conflab import rho_global
    return rho_global(cylinder(k, n))
