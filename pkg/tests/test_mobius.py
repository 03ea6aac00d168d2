import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conflab import (
    ChartId,
    ConformalMetric,
    MobiusTransform,
    NonPositiveScale,
    SpherePoint,
    dilation,
    dilation_at,
    make_round,
    pullback,
    random_mobius,
    rotation,
    stereo_lift,
    stereo_project,
)
from conflab.metrics import make_perturbed_round
from conflab.sphere import atlas_geometry

from conftest import random_points


def sup_diff(a, b):
    return max(float(np.max(np.abs(x - y))) for x, y in zip(a.u.values, b.u.values))


def test_identity_fixes_points(rng):
    e = MobiusTransform.identity()
    for p in random_points(rng, 10):
        assert np.allclose(e.apply(p).as_array(), p.as_array(), atol=1e-14)


def test_polar_rotation_multiplies_by_phase(rng):
    alpha = 0.83
    sigma = MobiusTransform(np.exp(0.5j * alpha), 0, 0, np.exp(-0.5j * alpha))
    for p in random_points(rng, 10):
        z = stereo_project(p)
        assert stereo_project(sigma.apply(p)) == pytest.approx(np.exp(1j * alpha) * z, abs=1e-12)


def test_determinant_normalized():
    m = MobiusTransform(2.0, 1.0, 3.0, 5.0)
    assert m.det == pytest.approx(1.0)
    c = m @ m.inverse()
    assert c.is_identity(1e-12)


def test_dilation_at_fixes_point_and_antipode(rng):
    for p in random_points(rng, 10):
        s = dilation_at(p, 7.0)
        assert np.allclose(s.apply(p).as_array(), p.as_array(), atol=1e-12)
        q = p.antipode()
        assert np.allclose(s.apply(q).as_array(), q.as_array(), atol=1e-12)


def test_dilation_at_unit_scale_is_identity(rng):
    for p in random_points(rng, 5):
        assert dilation_at(p, 1.0).is_identity(1e-12)


def test_dilation_at_origin_divides(rng):
    s = dilation_at(SpherePoint(0, 0, -1), 4.0)
    for z in rng.normal(size=5) + 1j * rng.normal(size=5):
        assert stereo_project(s.apply(stereo_lift(z))) == pytest.approx(z / 4.0, abs=1e-12)


def test_dilation_at_north_pole_tie_break():
    s = dilation_at(SpherePoint(0, 0, 1), 3.0)
    assert np.allclose(s.apply(SpherePoint(0, 0, 1)).as_array(), [0, 0, 1], atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 20), st.floats(0.05, 20), st.integers(0, 2 ** 31))
def test_dilation_group_law(s, t, seed):
    rng = np.random.default_rng(seed)
    p = SpherePoint(*rng.normal(size=3))
    a = dilation_at(p, s) @ dilation_at(p, t)
    b = dilation_at(p, s * t)
    assert np.max(np.abs(a.matrix - b.matrix)) <= 1e-10


def test_nonpositive_scale():
    with pytest.raises(NonPositiveScale):
        dilation(0.0)
    with pytest.raises(NonPositiveScale):
        dilation_at(SpherePoint(1, 0, 0), -2.0)


def test_round_trip_serialization(rng):
    m = random_mobius(rng)
    assert MobiusTransform.from_dict(m.to_dict()) == m


def test_pullback_identity_is_exact(round_metric):
    g = make_perturbed_round(2, 0.3, n=65)
    assert pullback(MobiusTransform.identity(), g).u is g.u


def test_pullback_rotation_keeps_round():
    g = make_round(129)
    h = pullback(rotation([1, 2, 3], 1.1), g)
    assert max(np.max(np.abs(v)) for v in h.u.values) <= 1e-10


def test_pullback_dilation_closed_form():
    s = 5.0
    g = make_round(129)
    h = pullback(dilation_at(SpherePoint(0, 0, -1), s), g)
    geo = atlas_geometry(h.atlas)[0]
    z = geo.zeta
    expected = np.log(s * (1 + np.abs(z) ** 2) / (s ** 2 + np.abs(z) ** 2))
    assert np.max(np.abs(h.u.values[0] - expected)) <= 1e-6


def test_pullback_group_law_analytic(rng):
    g = make_perturbed_round(3, 0.2)
    s, t = random_mobius(rng, 0.5), random_mobius(rng, 0.5)
    assert sup_diff(pullback(s @ t, g), pullback(t, pullback(s, g))) <= 1e-6


def test_pullback_group_law_sampled(rng):
    g = ConformalMetric(make_perturbed_round(3, 0.2).u)
    s, t = random_mobius(rng, 0.5), random_mobius(rng, 0.5)
    assert sup_diff(pullback(s @ t, g), pullback(t, pullback(s, g))) <= 1e-6


def test_pullback_area_invariant(rng):
    g = make_perturbed_round(4, 0.3)
    for _ in range(3):
        h = pullback(random_mobius(rng), g)
        assert abs(h.functionals(adapted=False).area - g.area) <= 1e-3
