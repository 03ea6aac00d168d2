import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conflab import (
    DegenerateSource,
    DiskField,
    EmptyFamily,
    HypothesisViolated,
    InvalidExponent,
    brezis_merle_check,
    dirichlet_solve,
    epsilon_regularity_experiment,
    l1logl1_norm,
    lp_regularity_experiment,
    lq_gradient_check,
    newtonian_potential,
    osc_bound_check,
)
from conflab.disk import (
    l1_norm,
    laplacian,
    EstimateReport,
    bubble_family,
    random_source,
    scaled_bubble,
    write_estimate_csv,
)

ONE = DiskField.constant(1.0)
ZERO = DiskField.constant(0.0)


def center(f):
    return f.values[f.n // 2, f.n // 2]


def test_potential_of_indicator_at_origin():
    assert center(newtonian_potential(ONE)) == pytest.approx(-math.pi / 2, abs=5e-3)


def test_potential_of_zero():
    assert np.all(newtonian_potential(ZERO).values == 0)


def test_potential_methods_agree():
    f = random_source(np.random.default_rng(3), n=65)
    a = newtonian_potential(f, "fft").values
    b = newtonian_potential(f, "direct").values
    assert np.max(np.abs(a - b)) <= 1e-12


def test_potential_bounded_by_entropy_norm():
    rng = np.random.default_rng(0)
    consts = []
    for _ in range(20):
        f = random_source(rng, n=129)
        sup = np.max(np.abs(newtonian_potential(f).values[f.mask]))
        consts.append(sup / (1 + l1logl1_norm(f)))
    assert np.all(np.isfinite(consts))
    assert max(consts) > 0


def test_dirichlet_constant_source():
    u = dirichlet_solve(ONE)
    exact = (1 - u.r ** 2) / 4
    assert np.max(np.abs(u.values - exact)[u.mask]) <= 1e-4
    assert center(u) == pytest.approx(0.25, abs=1e-4)


def test_dirichlet_zero_source():
    assert np.all(dirichlet_solve(ZERO).values == 0)


def test_dirichlet_linear():
    rng = np.random.default_rng(8)
    f, g = random_source(rng), random_source(rng)
    lhs = dirichlet_solve(2.0 * f + (-3.0) * g).values
    rhs = 2.0 * dirichlet_solve(f).values - 3.0 * dirichlet_solve(g).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-9


def test_l1logl1_values():
    assert l1logl1_norm(ONE) == pytest.approx(math.pi * math.log(2), abs=5e-3)
    assert l1logl1_norm(ZERO) == 0.0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_l1logl1_superlinear(seed):
    f = random_source(np.random.default_rng(seed), n=65)
    assert l1logl1_norm(2.0 * f) >= 2.0 * l1logl1_norm(f)


def test_brezis_merle_constant():
    r = brezis_merle_check(ONE, 1.0)
    assert r.params["u_max"] == pytest.approx(0.25, abs=1e-4)
    assert r.params["l1"] == pytest.approx(math.pi, abs=1e-3)
    assert r.rhs_bound == pytest.approx(8 * math.pi)
    assert r.holds


def test_brezis_merle_limit_lhs_is_disk_area():
    r = brezis_merle_check(ONE, 4 * math.pi - 1e-9)
    assert r.lhs == pytest.approx(math.pi, abs=1e-3)


def test_brezis_merle_limit_holds():
    # rhs tends to 8 pi / (4 pi)^2 = 1 / (2 pi) here, below the disk area
    assert brezis_merle_check(ONE, 4 * math.pi - 1e-9).holds


def test_brezis_merle_degenerate():
    with pytest.raises(DegenerateSource):
        brezis_merle_check(ZERO, 1.0)


def test_lq_constant_source_oracle():
    r = lq_gradient_check(ONE, 1.0)
    for rad, m in zip(r.params["radii"], r.params["scaled_mass"]):
        assert m == pytest.approx(rad * math.pi * rad ** 3 / 3, rel=1e-2)


def test_lq_zero_source():
    assert lq_gradient_check(ZERO, 1.0).constant_estimate == 0.0


@pytest.mark.parametrize("q", [0.0, 2.0, 2.5, -1.0])
def test_lq_rejects_exponent(q):
    with pytest.raises(InvalidExponent):
        lq_gradient_check(ONE, q)
    with pytest.raises(InvalidExponent):
        osc_bound_check(ONE, q)


def test_osc_harmonic_offset():
    x, _ = ZERO.coords
    r = osc_bound_check(ZERO, 1.5, offset=ZERO.like(x))
    assert np.isfinite(r.lhs)
    assert r.rhs_bound >= 1.0


def test_osc_constant_shift_invariant():
    f = random_source(np.random.default_rng(5))
    a = osc_bound_check(f, 1.5)
    b = osc_bound_check(f, 1.5, offset=DiskField.constant(3.0))
    assert b.lhs == pytest.approx(a.lhs, rel=1e-12, abs=1e-12)


def test_osc_family_bounded():
    rng = np.random.default_rng(11)
    est = [osc_bound_check(random_source(rng, n=129), 1.5).constant_estimate for _ in range(20)]
    assert np.all(np.isfinite(est))


def test_epsilon_regularity_family():
    r = epsilon_regularity_experiment(bubble_family(0.05), 0.05, 10.0)
    assert np.isfinite(r.lhs)
    assert len(r.params["values"]) == 10


def test_epsilon_regularity_empty():
    with pytest.raises(EmptyFamily):
        epsilon_regularity_experiment([], 0.05, 10.0)


def test_epsilon_regularity_area_violation():
    # area 4 pi t^2 / (4 + t^2) = 2 eps
    eps = 0.05
    m = 2 * eps
    t = math.sqrt(4 * m / (4 * math.pi - m))
    with pytest.raises(HypothesisViolated) as info:
        epsilon_regularity_experiment([scaled_bubble(t)], eps, 10.0)
    assert info.value.hypothesis == "area"
    assert info.value.member == 0


def test_lp_round_cap_quadrature():
    u, K = scaled_bubble(0.2)
    r = lp_regularity_experiment([(u, K)], 0.5, 10.0, 2.0)
    direct = u.integrate(np.exp(4.0 * u.values), 0.5)
    assert r.lhs == pytest.approx(direct, rel=1e-12)


def test_lp_p1_dominates_entropy():
    u, K = scaled_bubble(0.2)
    ent = epsilon_regularity_experiment([(u, K)], 0.5, 10.0).lhs
    lp1 = lp_regularity_experiment([(u, K)], 0.5, 10.0, 1.0).lhs
    assert ent <= lp1


def test_lp_family_refinement():
    coarse = lp_regularity_experiment(bubble_family(0.05, n=129), 0.05, 10.0, 2.0).lhs
    fine = lp_regularity_experiment(bubble_family(0.05, n=257), 0.05, 10.0, 2.0).lhs
    assert np.isfinite(fine)
    assert abs(fine - coarse) <= 0.1 * abs(fine)


def test_lp_rejects_small_p():
    with pytest.raises(InvalidExponent):
        lp_regularity_experiment(bubble_family(0.05, members=2), 0.05, 10.0, 0.5)


def test_disk_field_round_trip(tmp_path):
    f = random_source(np.random.default_rng(2), n=65)
    f.save(tmp_path / "f.json")
    g = DiskField.load(tmp_path / "f.json")
    assert np.array_equal(f.values, g.values)


def test_disk_field_validation():
    with pytest.raises(ValueError):
        DiskField(np.zeros((64, 64)))
    with pytest.raises(ValueError):
        DiskField(np.full((65, 65), np.nan))


def test_estimate_csv():
    buf = io.StringIO()
    write_estimate_csv([EstimateReport("x", 1.0, 2.0, 0.5, True, {"eps": 1.0}, 65)], buf)
    assert buf.getvalue().splitlines()[1] == "x,eps=1.0,1.0,2.0,0.5,true,65"


def test_lq_estimate_stable_across_radii():
    rng = np.random.default_rng(21)
    spreads = []
    for _ in range(10):
        r = lq_gradient_check(random_source(rng), 1.0, radii=(0.125, 0.25, 0.5))
        m = r.params["scaled_mass"]
        spreads.append(max(m) / min(m))
    assert max(spreads) <= 2.0, f"per-radius spread up to {max(spreads):.3g}"


def _harmonic_defect(f, inner=0.9):
    # -I/(2 pi) and u both solve -Δw = f, so I/(2 pi) + u is harmonic
    diff = newtonian_potential(f) * (1 / (2 * math.pi)) + dirichlet_solve(f)
    lap = laplacian(diff)
    return float(np.max(np.abs(lap[diff.r <= inner])))


def test_potential_minus_solution_harmonic_indicator():
    assert _harmonic_defect(ONE) <= 1e-6 * l1_norm(ONE)


def test_potential_minus_solution_harmonic_random():
    rng = np.random.default_rng(17)
    worst = max(_harmonic_defect(f) / l1_norm(f) for f in (random_source(rng) for _ in range(5)))
    assert worst <= 1e-6, f"relative defect {worst:.3g}"


def test_dirichlet_second_order():
    errs = []
    for n in (129, 257):
        u = dirichlet_solve(DiskField.constant(1.0, n))
        errs.append(np.max(np.abs(u.values - (1 - u.r ** 2) / 4)[u.mask]))
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_maximum_principle():
    rng = np.random.default_rng(9)
    for _ in range(5):
        f = random_source(rng)
        f = f.like(np.abs(f.values))
        assert dirichlet_solve(f).values.min() >= -1e-10
