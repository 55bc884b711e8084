import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import integrate

from ouconvex import radial
from ouconvex.radial import f0_hat, f_0, f_l, mode, scale_h
from ouconvex.specfun import gamma_d

mpmath.mp.dps = 30


def mp_f_l(d, l, r):
    r = mpmath.mpf(r)
    pref = (mpmath.gamma((l + d + 1) / mpmath.mpf(2)) * mpmath.gamma(l / mpmath.mpf(2))
            / (mpmath.gamma(l + d / mpmath.mpf(2)) * mpmath.gamma(0.5)))
    return float(r**l * pref * mpmath.hyp2f1(l / mpmath.mpf(2), (l - 1) / mpmath.mpf(2),
                                             l + d / mpmath.mpf(2), -r * r))


def mp_f_0(d, r):
    g = gamma_d(d)
    half = mpmath.mpf(d - 1) / 2
    inner = lambda u: mpmath.quad(lambda v: v ** (d - 1) / (1 + v * v) ** ((d + 1) / mpmath.mpf(2)), [0, u])
    outer = lambda u: ((1 + u * u) / (u * u)) ** half * inner(u) if u > 0 else 0
    return float(2 * g * mpmath.quad(outer, [0, min(r, 1), r] if r > 1 else [0, r]))


def test_radial_mode_prefactor():
    for d, l in ((2, 3), (3, 1), (5, 17)):
        m = mode(d, l)
        ref = (math.lgamma((l + d + 1) / 2) + math.lgamma(l / 2)
               - math.lgamma(l + d / 2) - math.lgamma(0.5))
        assert_allclose(m.log_prefactor, ref, rtol=1e-13)


def test_f1_is_identity():
    r = np.linspace(0, 100, 1001)
    for d in (2, 3, 5):
        assert_allclose(f_l(mode(d, 1), r), r, rtol=1e-15)
    assert f_l(mode(4, 1), 7.3) == 7.3


def test_f_l_zero_and_validation():
    for l in (1, 2, 9):
        assert f_l(mode(3, l), 0.0) == 0.0
    with pytest.raises(ValueError):
        f_l(mode(3, 0), 1.0)
    with pytest.raises(ValueError):
        f_l(mode(3, 2), -1.0)


@pytest.mark.parametrize("d", [2, 3, 5, 10])
def test_f_l_against_mpmath(d):
    r = np.array([0.01, 0.3, 1.0, 2.5, 7.0, 30.0, 200.0, 1e4])
    for l in (2, 3, 6, 15, 40, 60):
        ref = np.array([mp_f_l(d, l, x) for x in r])
        assert_allclose(f_l(mode(d, l), r), ref, rtol=1e-10, atol=1e-300, err_msg=f"l={l}")


def test_log_f_l_when_values_underflow():
    m = mode(2, 120)
    r = np.array([1e-3, 0.05])
    got_all = radial.log_f_l(m, r)
    # f_l(1e-3) ~ exp(-800) is below the double range
    assert f_l(m, 1e-3) == 0.0 and got_all[0] < -745
    for x, got in zip(r, got_all):
        xm = mpmath.mpf(x)
        lg = (120 * mpmath.log(xm) + mpmath.loggamma(123 / mpmath.mpf(2)) + mpmath.loggamma(60)
              - mpmath.loggamma(121) - mpmath.loggamma(0.5)
              + mpmath.log(mpmath.hyp2f1(60, 119 / mpmath.mpf(2), 121, -xm * xm)))
        assert_allclose(got, float(lg), rtol=1e-12)


@settings(max_examples=80, deadline=None)
@given(d=st.integers(2, 10), l=st.integers(1, 60), r=st.floats(0.0, 1e3))
def test_f_l_bounds(d, l, r):
    v = f_l(mode(d, l), r)
    assert 0.0 <= v <= r * (1 + 1e-13)


@settings(max_examples=60, deadline=None)
@given(d=st.sampled_from([2, 3, 5]), l=st.integers(1, 20), r=st.floats(0.1, 50.0))
def test_mode_residual_property(d, l, r):
    res = radial.mode_residual(d, l, r)
    assert res < 1e-6 * (1 + f_l(mode(d, l), r))


def test_mode_residual_example():
    assert radial.mode_residual(3, 2, 1.0, 1e-4) < 1e-6


def test_f_l_asymptote():
    for d, l in ((2, 2), (3, 5), (5, 12)):
        m = mode(d, l)
        r = np.geomspace(1e2, 1e8, 13)
        ratio = f_l(m, r) / r
        assert np.all(ratio <= 1.0) and np.all(np.diff(ratio) > 0)
        # f_l(r) = r - kappa + O(1/r), so r (1 - f_l/r) settles to a constant
        kappa = r * (1 - ratio)
        assert_allclose(kappa[-4:], kappa[-1], rtol=1e-4)


def test_inner_integral_limit():
    for d in (2, 3, 5, 10):
        assert_allclose(radial.inner_integral(d, 1e300), 0.5 / gamma_d(d), rtol=0, atol=1e-10)
        val, _ = integrate.quad(lambda v: v ** (d - 1) / (1 + v * v) ** ((d + 1) / 2), 0, np.inf,
                                epsabs=0, epsrel=1e-13)
        assert_allclose(val, 0.5 / gamma_d(d), rtol=1e-11)


def test_inner_integral_finite_u():
    for d in (2, 4):
        for u in (0.2, 1.0, 6.0):
            val, _ = integrate.quad(lambda v: v ** (d - 1) / (1 + v * v) ** ((d + 1) / 2), 0, u,
                                    epsabs=0, epsrel=1e-13)
            assert_allclose(radial.inner_integral(d, u), val, rtol=1e-12)


def test_f_0_origin():
    for d in (2, 3, 7):
        assert f_0(d, 0.0) == 0.0
        assert f0_hat(d, 0.0) == 0.0


@pytest.mark.parametrize("d", [2, 3, 5])
def test_f_0_against_nested_quadrature(d):
    for r in (0.05, 0.7, 2.0, 15.0, 400.0):
        assert_allclose(f_0(d, r), mp_f_0(d, r), rtol=0, atol=1e-9)


def test_f_0_vectorised_shapes():
    r = np.linspace(0, 5, 12).reshape(3, 4)
    out = f_0(3, r)
    assert out.shape == (3, 4)
    assert_allclose(out.ravel(), [f_0(3, x) for x in r.ravel()], rtol=1e-15)


def test_f_0_residual_example_and_property():
    assert radial.f0_residual(3, 2.0) < 1e-6
    r = np.linspace(0.1, 50, 400)
    for d in (2, 3, 5):
        assert np.max(radial.f0_residual(d, r)) < 1e-6


def test_f0_hat_log_envelope():
    r = np.concatenate([np.linspace(0, 10, 501), np.geomspace(10, 1e8, 400)])
    for d in (2, 3, 5, 10):
        fh = f0_hat(d, r)
        assert np.all(fh >= 0)
        assert np.all(fh <= radial.f0_hat_envelope(d, r))
    fh = f0_hat(3, r[r <= 1e4])
    assert np.max(np.abs(fh) / (1 + np.log1p(r[r <= 1e4]))) <= 10
    assert_allclose(f0_hat(2, 3.0), 3.0 - f_0(2, 3.0), rtol=1e-13)


def test_f0_hat_grows_slower_than_power():
    # (B log r + A) / r^0.1 peaks near log r = 10; past that it must fall
    r = np.geomspace(1e9, 1e18, 19)
    ratio = f0_hat(3, r) / r**0.1
    assert np.all(np.diff(ratio) < 0)
    # the growth rate is 2 gamma_d per unit of log r
    slope = np.diff(f0_hat(3, r)) / np.diff(np.log(r))
    assert_allclose(slope[-5:], 2 * gamma_d(3), rtol=1e-6)


def test_scale_h_examples():
    assert scale_h(3, 1.0) == 0.0
    assert_allclose(scale_h(3, 2.0), 1.5, rtol=1e-13)
    assert_allclose(scale_h(3, 0.5), -1.5, rtol=1e-13)


def test_scale_h_closed_form_d3():
    r = np.geomspace(0.1, 100, 300)
    assert np.max(np.abs(scale_h(3, r) - (r - 1 / r))) < 1e-10


@pytest.mark.parametrize("d", [2, 4, 6])
def test_scale_h_against_quad(d):
    for r in (0.05, 0.5, 3.0, 80.0):
        val, _ = integrate.quad(lambda u: ((1 + u * u) / (u * u)) ** ((d - 1) / 2), 1.0, r,
                                epsabs=0, epsrel=1e-13, limit=200)
        assert_allclose(scale_h(d, r), val, rtol=1e-11)


def test_scale_h_floor_and_limit():
    assert scale_h(3, 1e-9) == -math.inf
    assert scale_h(3, 1e-3, floor=1e-2) == -math.inf
    with pytest.raises(ValueError):
        scale_h(3, 0.0)
    big = np.array([1e4, 1e6])
    assert np.all(np.abs(scale_h(2, big) / big - 1) < 1e-3)


def test_decay_envelope_examples():
    delta = (1 / math.sqrt(2) + 1) / 2
    assert_allclose(radial.decay_envelope(2, 1.0, 10), delta**10, rtol=1e-15)
    env = [radial.decay_envelope(3, 2.0, l) for l in range(1, 61)]
    assert np.all(np.diff(env) < 0)
    with pytest.raises(ValueError):
        radial.decay_envelope(2, 1.0, 0)


@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("R", [1.0, 2.0])
def test_decay_onset(d, R):
    L0 = radial.decay_onset(d, R)
    assert L0 <= 30
    grid = np.linspace(R / 64, R, 64)
    for l in range(L0, 61):
        assert np.max(radial.log_f_l(mode(d, l), grid)) <= l * math.log(radial.decay_delta(R))
