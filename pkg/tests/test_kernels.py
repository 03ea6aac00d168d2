import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conflab import kernels
from conflab.sphere import normalize_spinor

IMPLS = kernels.implementations()
compiled = pytest.mark.skipif("compiled" not in IMPLS, reason="extension not built")


def cloud(seed, count=4000):
    rng = np.random.default_rng(seed)
    z1, z2 = normalize_spinor(rng.normal(size=count) + 1j * rng.normal(size=count),
                              rng.normal(size=count) + 1j * rng.normal(size=count))
    w = rng.uniform(0, 1, count) * 4 * math.pi / count
    delta = rng.uniform(0.001, 0.05, count)
    x = normalize_spinor(complex(*rng.normal(size=2)), complex(*rng.normal(size=2)))
    return z1, z2, w, delta, complex(x[0]), complex(x[1])


def test_backend_flag():
    assert kernels.BACKEND in ("compiled", "python")


def test_pure_python_forced():
    env = dict(os.environ, CONFLAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import conflab; print(conflab.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_distance_antipode():
    d = kernels.geodesic_distances(np.array([1.0 + 0j]), np.array([0j]), 0j, 1.0 + 0j,
                                   impl=IMPLS["python"])
    assert d[0] == pytest.approx(math.pi)


@compiled
@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_distances_agree(seed):
    z1, z2, _, _, x1, x2 = cloud(seed, 500)
    a = kernels.geodesic_distances(z1, z2, x1, x2, impl=IMPLS["python"])
    b = kernels.geodesic_distances(z1, z2, x1, x2, impl=IMPLS["compiled"])
    assert np.max(np.abs(a - b)) <= 1e-13


@compiled
@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.0, math.pi))
def test_ball_mass_agrees(seed, r):
    z1, z2, w, delta, x1, x2 = cloud(seed, 500)
    a = kernels.ball_mass(z1, z2, w, delta, x1, x2, r, impl=IMPLS["python"])
    b = kernels.ball_mass(z1, z2, w, delta, x1, x2, r, impl=IMPLS["compiled"])
    assert a == pytest.approx(b, rel=1e-12, abs=1e-14)


@compiled
@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.05, 0.95))
def test_rho_bisect_agrees(seed, frac):
    z1, z2, w, delta, x1, x2 = cloud(seed)
    target = frac * float(np.sum(w))
    a = kernels.rho_bisect(z1, z2, w, delta, x1, x2, target, 1e-9, impl=IMPLS["python"])
    b = kernels.rho_bisect(z1, z2, w, delta, x1, x2, target, 1e-9, impl=IMPLS["compiled"])
    assert a == pytest.approx(b, abs=1e-12)


@pytest.mark.parametrize("name", sorted(IMPLS))
def test_rho_bisect_hits_target(name):
    z1, z2, w, delta, x1, x2 = cloud(7)
    target = 0.3 * float(np.sum(w))
    r = kernels.rho_bisect(z1, z2, w, delta, x1, x2, target, 1e-10, impl=IMPLS[name])
    assert kernels.ball_mass(z1, z2, w, delta, x1, x2, r) == pytest.approx(target, abs=1e-10)


@compiled
def test_log_potential_agrees():
    rng = np.random.default_rng(4)
    sx, sy, sw = rng.uniform(-1, 1, (3, 300))
    tx, ty = rng.uniform(-1, 1, (2, 200))
    tx[:5], ty[:5] = sx[:5], sy[:5]
    a = kernels.log_potential(sx, sy, sw, tx, ty, -3.0, 1e-20, impl=IMPLS["python"])
    b = kernels.log_potential(sx, sy, sw, tx, ty, -3.0, 1e-20, impl=IMPLS["compiled"])
    assert np.max(np.abs(a - b)) <= 1e-12


@compiled
def test_rho_at_same_under_both_backends():
    code = ("import conflab as c; g = c.make_dilated_round(c.SpherePoint(0.48, -0.36, 0.8), 10.0, 129);"
            "print(repr(c.rho_at(g, c.SpherePoint(1, 2, 3))))")
    vals = []
    for flag in ("0", "1"):
        env = dict(os.environ, CONFLAB_PURE_PYTHON=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                             text=True, check=True)
        vals.append(float(out.stdout))
    assert vals[0] == pytest.approx(vals[1], abs=1e-12)
