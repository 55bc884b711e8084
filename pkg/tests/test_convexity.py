import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from ouconvex import convexity, solver
from ouconvex.convexity import CONVEX, NONCONVEX, BallSampler, ProbeConfig, cone_function
from ouconvex.harmonics import BoundarySpec

SMALL = ProbeConfig(n_pairs=4_000, n_probes=128)


def test_cone_function_examples():
    v = cone_function(BoundarySpec.builtin("constant", 3))
    assert_allclose(v(np.array([3.0, 4.0, 0.0])), 5.0, rtol=1e-15)
    assert v(np.zeros(3)) == 0.0
    v = cone_function(BoundarySpec.builtin("cos_theta", 2))
    x = np.array([[0.5, -2.0], [-3.0, 1.0]])
    assert_allclose(v(x), x[:, 0], rtol=1e-15)
    v = cone_function(BoundarySpec.builtin("abs_cos_theta", 2))
    assert_allclose(v(x), np.abs(x[:, 0]), rtol=1e-15)


@settings(max_examples=50, deadline=None)
@given(lam=st.floats(0.0, 1e3), seed=st.integers(0, 2**16),
       name=st.sampled_from(["cos_2theta", "abs_cos_theta", "constant"]))
def test_cone_function_homogeneous(lam, seed, name):
    v = cone_function(BoundarySpec.builtin(name, 2))
    x = np.random.default_rng(seed).normal(size=(4, 2))
    assert np.all(np.abs(v(lam * x) - lam * v(x)) <= 1e-12 * (1 + lam * np.linalg.norm(x, axis=1)))


def test_hessian_of_simple_functions():
    probe = np.array([[0.3, -1.0, 2.0], [1.0, 1.0, 1.0]])
    sq = lambda X: np.sum(np.atleast_2d(X) ** 2, axis=1)
    assert_allclose(convexity.hessian_eigs(sq, probe), 2.0, rtol=1e-6)
    lin = lambda X: np.atleast_2d(X) @ np.array([1.0, -2.0, 0.5])
    assert np.max(np.abs(convexity.hessian_eigs(lin, probe))) < 1e-6
    with pytest.warns(convexity.ConditioningWarning):
        convexity.hessian_eigs(lambda X: np.full(len(np.atleast_2d(X)), 3.0), probe)


def test_cos_2theta_cone_hessian():
    # v(x, y) = (x^2 - y^2)/r: at (1, 0) the Hessian is diag(0, -3)
    v = cone_function(BoundarySpec.builtin("cos_2theta", 2))
    assert_allclose(convexity.hessian_min_eig(v, np.array([[1.0, 0.0]])), -3.0, rtol=1e-5)
    # degree-1 homogeneity: the Hessian scales like 1/|x|
    assert_allclose(convexity.hessian_min_eig(v, np.array([[0.25, 0.0]])), -12.0, rtol=1e-5)


def test_midpoint_scan_witness():
    v = cone_function(BoundarySpec.builtin("cos_2theta", 2))
    rep = convexity.midpoint_scan(v, BallSampler(2, 2.0, seed=3), 5_000)
    assert rep.verdict == NONCONVEX and not rep.convex
    assert rep.witness.violation > 0.1
    assert_allclose(rep.witness.recheck(v), rep.witness.violation, rtol=1e-12)
    assert rep.witness.violation >= rep.max_violation
    with pytest.raises(ValueError):
        convexity.midpoint_scan(v, BallSampler(2), 0)


def test_midpoint_scan_convex_examples():
    for name, d in (("abs_cos_theta", 2), ("constant", 3), ("axis_coord", 4)):
        rep = convexity.midpoint_scan(cone_function(BoundarySpec.builtin(name, d)), BallSampler(d, 2.0), 5_000)
        assert rep.verdict == CONVEX and rep.witness is None
        assert rep.max_violation <= rep.tol


def test_ball_sampler():
    s = BallSampler(3, radius=2.0, seed=5)
    x, y, a = s(1_000)
    assert np.all(np.linalg.norm(x, axis=1) <= 2.0) and np.all((a >= 0) & (a <= 1))
    assert np.array_equal(s(1_000)[1], y)
    r = np.linalg.norm(s.shell(500, 0.5), axis=1)
    assert r.min() >= 0.5 and r.max() <= 2.0
    # uniform in the ball: P(|x| < 1) = (1/2)^3
    big = np.linalg.norm(s(40_000)[0], axis=1)
    assert abs(np.mean(big < 1.0) - 0.125) < 4 * math.sqrt(0.125 * 0.875 / 40_000)


def test_probe_refined():
    p = ProbeConfig().refined()
    assert (p.n_pairs, p.n_probes, p.h_fd, p.seed) == (40_000, 1024, 5e-4, 1)


HARNESS = [("constant", 2, CONVEX), ("cos_theta", 2, CONVEX), ("cos_2theta", 2, NONCONVEX),
           ("axis_coord", 3, CONVEX), ("constant", 3, CONVEX), ("axis_coord_squared", 3, NONCONVEX),
           ("axis_coord_squared", 5, NONCONVEX)]


@pytest.mark.parametrize("name,d,expected", HARNESS)
def test_harness_catalog(name, d, expected):
    g = BoundarySpec.builtin(name, d)
    u_rep, v_rep, agree = convexity.theorem2_harness(g, probe=SMALL)
    assert agree and u_rep.verdict == v_rep.verdict == expected
    assert u_rep.consistent and v_rep.consistent
    if expected == NONCONVEX:
        u = solver.solve(g, radius=SMALL.radius)
        assert u_rep.witness.recheck(u) > u_rep.tol
        assert u_rep.min_hessian_eigenvalue < -u_rep.eig_tol


def test_harness_abs_cos_convex():
    u_rep, v_rep, agree = convexity.theorem2_harness(BoundarySpec.builtin("abs_cos_theta", 2), probe=SMALL)
    assert agree and u_rep.convex


def test_harness_stable_under_refinement():
    g = BoundarySpec.builtin("cos_2theta", 2)
    for probe in (SMALL, SMALL.refined()):
        u_rep, v_rep, agree = convexity.theorem2_harness(g, probe=probe)
        assert agree and u_rep.verdict == NONCONVEX


def test_harness_scaling():
    g = BoundarySpec.builtin("constant", 2)
    assert convexity.theorem2_harness(g.scaled(2.0), probe=SMALL)[0].convex
    # -|x| is concave, so both sides must find a witness
    u_rep, v_rep, agree = convexity.theorem2_harness(g.scaled(-1.0), probe=SMALL)
    assert agree and u_rep.verdict == NONCONVEX


def test_report_to_dict():
    rep = convexity.convexity_report(lambda X: np.sum(np.atleast_2d(X) ** 2, axis=1), 2, SMALL)
    d = rep.to_dict()
    assert d["verdict"] == CONVEX and d["consistent"] is True
    assert_allclose(d["min_hessian_eigenvalue"], 2.0, rtol=1e-6)
