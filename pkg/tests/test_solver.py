import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ouconvex import radial, solver
from ouconvex.harmonics import BoundarySpec
from ouconvex.specfun import gamma_d

CATALOG = {
    2: ("constant", "cos_theta", "cos_2theta", "abs_cos_theta", "axis_coord"),
    3: ("constant", "axis_coord", "axis_coord_squared"),
    5: ("constant", "axis_coord", "axis_coord_squared"),
}


def abs_cos_exact(x):
    # the d = 2 solution for g = |cos theta|: it depends on x_1 only and u'' = (2/pi) / (1 + x_1^2)
    x1 = np.atleast_2d(x)[:, 0]
    return (2 / math.pi) * (x1 * np.arctan(x1) - 0.5 * np.log1p(x1 * x1))


def standard_grid(d):
    return solver.sample_points(d, np.geomspace(0.2, 20, 8), 64)


def test_constant_solution_is_f0():
    for d in (2, 3, 5):
        u = solver.solve(BoundarySpec.builtin("constant", d))
        assert_allclose(u.c, gamma_d(d), rtol=1e-14)
        x = solver.sample_points(d, [0.3, 2.0, 9.0], 5)
        assert_allclose(u(x), radial.f_0(d, np.linalg.norm(x, axis=1)), rtol=1e-13)


def test_cos_theta_solution_is_linear():
    u = solver.solve(BoundarySpec.builtin("cos_theta", 2))
    assert abs(u.c) < 1e-15
    x = solver.sample_points(2, [0.1, 1.0, 50.0], 16)
    assert_allclose(u(x), x[:, 0], rtol=1e-13, atol=1e-13)
    assert solver.evaluate(u, np.array([3.0, 4.0])) == (pytest.approx(3.0, rel=1e-14), 0.0)


def test_cos_2theta_single_mode():
    u = solver.solve(BoundarySpec.builtin("cos_2theta", 2))
    assert abs(u.c) < 1e-15
    x = solver.sample_points(2, [0.5, 3.0], 12)
    r = np.linalg.norm(x, axis=1)
    cos2 = (x[:, 0] ** 2 - x[:, 1] ** 2) / r**2
    assert_allclose(u(x), radial.f_l(radial.mode(2, 2), r) * cos2, rtol=1e-12, atol=1e-14)


def test_constant_c_examples():
    assert_allclose(solver.constant_c(BoundarySpec.builtin("constant", 2)), 0.5, rtol=1e-15)
    assert_allclose(solver.constant_c(BoundarySpec.builtin("constant", 3)), 2 / math.pi, rtol=1e-15)
    assert solver.constant_c(BoundarySpec.builtin("cos_theta", 2)) == pytest.approx(0, abs=1e-15)


def test_evaluate_at_origin_and_single_mode():
    for name, d in (("constant", 3), ("abs_cos_theta", 2), ("axis_coord_squared", 4)):
        u = solver.solve(BoundarySpec.builtin(name, d))
        assert u.evaluate(np.zeros(d)) == (0.0, 0.0)
    u = solver.solve(BoundarySpec.builtin("constant", 3))
    val, tail = u.evaluate(np.array([0.0, 2.0, 0.0]))
    assert_allclose(val, radial.f_0(3, 2.0), rtol=1e-15)
    assert tail == 0.0
    with pytest.raises(ValueError):
        u.evaluate(np.ones(2))


def test_abs_cos_matches_closed_form():
    g = BoundarySpec.builtin("abs_cos_theta", 2)
    u = solver.solve(g, radius=5.0)
    assert_allclose(u.c, 1 / math.pi, rtol=1e-9)
    x = solver.sample_points(2, [0.2, 1.0, 2.5, 5.0], 24)
    vals, tails = u.evaluate(x)
    # certified by the truncation tail plus the ~1e-9 projection error
    assert np.all(np.abs(vals - abs_cos_exact(x)) <= tails + 1e-8)
    assert np.max(np.abs(vals - abs_cos_exact(x))) < 1e-7


def test_abs_cos_far_field():
    # L is capped at 128, so far out the truncation error is visible but certified
    u = solver.solve(BoundarySpec.builtin("abs_cos_theta", 2))
    x = solver.sample_points(2, [20.0, 40.0], 16)
    vals, tails = u.evaluate(x)
    exact = abs_cos_exact(x)
    assert np.all(np.abs(vals - exact) <= tails)
    assert_allclose(vals, exact, rtol=1e-5)


def test_residual_examples():
    u = solver.solve(BoundarySpec.builtin("cos_theta", 2))
    assert solver.residual(u, np.array([0.7, -2.0])) < 1e-8
    u = solver.solve(BoundarySpec.builtin("constant", 3))
    assert solver.residual(u, np.array([1.5, 0.0, 0.0]), h_fd=1e-3) < 1e-5
    u = solver.solve(BoundarySpec.builtin("cos_2theta", 2))
    assert solver.residual(u, np.array([1.0, 1.0])) < 1e-5
    with pytest.raises(ValueError):
        solver.residual(u, np.array([1e-5, 0.0]))


@pytest.mark.parametrize("d,name", [(d, n) for d, names in CATALOG.items() for n in names])
def test_residual_standard_grid(d, name):
    u = solver.solve(BoundarySpec.builtin(name, d))
    assert np.max(solver.residual(u, standard_grid(d))) < 1e-5


def test_solution_vanishes_at_origin():
    for d, names in CATALOG.items():
        for name in names:
            assert solver.solve(BoundarySpec.builtin(name, d))(np.zeros(d)) == 0.0


def test_linearity():
    t1 = [(0, "cos", 0.3), (2, "cos", 1.0), (5, "sin", -0.4)]
    t2 = [(1, "sin", 2.0), (2, "cos", -0.5), (7, "cos", 0.25)]
    a, b = 1.7, -0.6
    combo = [(l, k, a * c) for l, k, c in t1] + [(l, k, b * c) for l, k, c in t2]
    u1, u2 = solver.solve(BoundarySpec.spectrum(2, t1)), solver.solve(BoundarySpec.spectrum(2, t2))
    u12 = solver.solve(BoundarySpec.spectrum(2, combo))
    x = solver.sample_points(2, [0.5, 1.5, 3.0, 30.0], 20)
    assert_allclose(u12(x), a * u1(x) + b * u2(x), rtol=1e-12, atol=1e-12)
    assert_allclose(u12.c, a * u1.c + b * u2.c, rtol=1e-13)
    # non-band-limited data: agreement within the summed tail bounds
    g = BoundarySpec.builtin("abs_cos_theta", 2)
    ug, us = solver.solve(g, radius=3.0), solver.solve(g.scaled(a), radius=3.0)
    vg, tg = ug.evaluate(x[:60])
    vs, ts = us.evaluate(x[:60])
    assert np.all(np.abs(vs - a * vg) <= ts + a * tg + 1e-12)


def test_tail_bound_monotone_in_L():
    g = BoundarySpec.builtin("abs_cos_theta", 2)
    tails = [solver.solve(g, L=L).tail_bound(1.0) for L in (4, 8, 16, 32, 64, 128)]
    assert np.all(np.diff(tails) <= 0)
    assert tails[-1] < 1e-8


def test_default_truncation_meets_target():
    g = BoundarySpec.builtin("abs_cos_theta", 2)
    for R in (0.5, 1.0):
        u = solver.solve(g, radius=R)
        assert u.L < solver.L_CAP
        assert u.tail_bound(R) < solver.TAIL_TARGET
        assert solver.solve(g, L=u.L - 1).tail_bound(R) >= solver.TAIL_TARGET
    # past R = 1 the envelope decays too slowly and the cap binds
    assert solver.solve(g, radius=2.0).L == solver.L_CAP


def test_band_limited_tail_is_zero():
    g = BoundarySpec.builtin("axis_coord_squared", 3)
    u = solver.solve(g)
    assert u.L == 2 and u.tail_bound(100.0) == 0.0


def test_uniqueness_surrogate():
    g = BoundarySpec.builtin("abs_cos_theta", 2)
    x = solver.sample_points(2, [0.3, 0.8, 1.5], 32)
    for L in (10, 20, 40):
        ua, ub = solver.solve(g, L=L), solver.solve(g, L=L + 10)
        ta = ua.evaluate(x)[1]
        assert np.all(np.abs(ua(x) - ub(x)) <= np.maximum(ta, ub.evaluate(x)[1]) + 1e-12)


def test_boundary_gap_examples():
    g = BoundarySpec.builtin("cos_theta", 2)
    u = solver.solve(g)
    for r in (0.5, 3.0, 77.0):
        assert solver.boundary_gap(u, g, r) < 1e-12
    g = BoundarySpec.builtin("constant", 3)
    u = solver.solve(g)
    gaps = [solver.boundary_gap(u, g, r) for r in (1.0, 5.0, 50.0)]
    assert_allclose(gaps, [abs(radial.f_0(3, r) / r - 1) for r in (1.0, 5.0, 50.0)], rtol=1e-12)
    assert gaps[0] > gaps[1] > gaps[2]
    g = BoundarySpec.builtin("cos_2theta", 2)
    u = solver.solve(g)
    gaps = [solver.boundary_gap(u, g, r) for r in (1.0, 5.0, 50.0)]
    assert gaps[0] > gaps[1] > gaps[2]
    with pytest.raises(ValueError):
        solver.boundary_gap(u, g, 0.0)
    with pytest.raises(ValueError):
        solver.boundary_gap(u, g, 1.0, n_dirs=4)


@pytest.mark.parametrize("d,name", [(2, "abs_cos_theta"), (2, "constant"), (3, "constant")])
def test_boundary_gap_decreasing_non_band_limited(d, name):
    g = BoundarySpec.builtin(name, d)
    u = solver.solve(g)
    gaps = [solver.boundary_gap(u, g, r) for r in (1.0, 5.0, 50.0)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_band_limited_gap_rate():
    # f_l(r)/r - 1 = O(1/r): the scaled gap r * gap(r) levels off
    g = BoundarySpec.builtin("cos_2theta", 2)
    u = solver.solve(g)
    r = np.array([50.0, 200.0, 800.0, 3200.0])
    scaled = r * np.array([solver.boundary_gap(u, g, x) for x in r])
    assert_allclose(scaled[1:], scaled[-1], rtol=0.02)


def test_max_principle_ratio_examples():
    x = solver.default_ratio_samples(2)
    g = BoundarySpec.builtin("cos_theta", 2)
    assert solver.max_principle_ratio(solver.solve(g), g, x) <= 1.0
    g = BoundarySpec.builtin("cos_2theta", 2)
    u = solver.solve(g)
    k = solver.max_principle_ratio(u, g, x)
    assert np.isfinite(k) and k <= 1.0
    # f_2(r) / (1 + r) climbs to 1, so the empirical constant settles as |x| grows
    ks = [solver.max_principle_ratio(u, g, solver.default_ratio_samples(2, r_max=R))
          for R in (25.0, 50.0, 100.0, 200.0, 400.0)]
    assert np.all(np.diff(ks) > 0) and np.all(np.diff(np.diff(ks)) < 0) and ks[-1] <= 1.0
    g10 = g.scaled(10.0)
    assert_allclose(solver.max_principle_ratio(solver.solve(g10), g10, x), k, rtol=1e-12)
    with pytest.raises(ValueError):
        solver.max_principle_ratio(u, BoundarySpec.builtin("constant", 2), x)
    with pytest.raises(ValueError):
        solver.max_principle_ratio(u, g, np.zeros((0, 2)))


def test_directions_deterministic_and_unit():
    for d in (2, 3, 6):
        a, b = solver.directions(d, 40), solver.directions(d, 40)
        assert np.array_equal(a, b)
        assert_allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-14)
    m = solver.meridian(np.array([0.0, 0.0, 1.0]), 9)
    assert_allclose(m[[0, -1], 2], [1.0, -1.0], atol=1e-15)
