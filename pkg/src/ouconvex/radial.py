"""Radial building blocks of the series solution.

The radial operator is A_R = (1+r^2)/2 d^2/dr^2 + (d-1)/(2r) d/dr. Degree-l
modes solve A_R f - l(l+d-2)/(2r^2) f = 0, the inhomogeneous mode solves
A_R f_0 = gamma_d; all are normalised by f(0) = 0 and f(r)/r -> 1.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import specfun
from .quadrature import QuadratureRule, gauss_legendre
from .specfun import HypParams, gamma_d

#: below this radius the scale function is reported as -inf
SCALE_FLOOR = 1e-8


@dataclass(frozen=True)
class RadialMode:
    d: int
    l: int
    log_prefactor: float = field(default=math.nan)

    def __post_init__(self):
        if self.d < 2 or self.l < 0:
            raise ValueError(f"need d >= 2 and l >= 0, got d={self.d}, l={self.l}")
        if self.l >= 1 and math.isnan(self.log_prefactor):
            lg = specfun.log_gamma
            l, d = self.l, self.d
            value = (lg((l + d + 1) / 2) + lg(l / 2)) - (lg(l + d / 2) + lg(0.5))
            object.__setattr__(self, "log_prefactor", value)

    @property
    def params(self):
        return HypParams.radial(self.l, self.d)

    def __call__(self, r):
        return f_l(self, r)


@lru_cache(maxsize=None)
def mode(d, l):
    return RadialMode(d, l)


def _as_array(r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be nonnegative")
    return r


def f_l(m, r):
    """Value of the degree-l mode (l >= 1), vectorised over r.

    Large radii use the 1/x connection formula, which gives f = r F2 + k F1
    with F1, F2 close to one. Elsewhere the Pfaff series is combined with the
    prefactor in linear space; only the Euler-integral fallback works in logs.
    """
    if m.l < 1:
        raise ValueError("f_l needs l >= 1; use f_0 for the inhomogeneous mode")
    r = _as_array(r)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    out = np.zeros(r.shape)
    if m.l == 1:
        out[:] = r
        return float(out[0]) if scalar else out
    p = m.params
    pos = r > 0
    x = -r[pos] ** 2
    vals = np.empty(x.shape)
    inv = specfun._inverse_route_ok(p, x)
    if np.any(inv):
        f1, f2, ratio, _ = specfun._inverse_parts(p, x[inv])
        vals[inv] = r[pos][inv] * f2 + ratio * f1
    ser = ~inv
    if np.any(ser):
        rr = r[pos][ser]
        z = rr * rr / (1.0 + rr * rr)
        with np.errstate(divide="ignore", over="ignore"):
            # rr * rr may underflow to 0 for subnormal radii; the logs are then -inf
            total = specfun._pfaff_series(p, z, logz=-np.log1p(1.0 / (rr * rr)))
            # r^l (1+r^2)^-b with l - 2b = 1, written to stay O(r)
            expo = np.where(
                rr >= 1.0,
                np.log(rr) - p.b * np.log1p(1.0 / (rr * rr)),
                m.l * np.log(rr) - p.b * np.log1p(rr * rr),
            )
        v = np.exp(expo + m.log_prefactor) * total
        for i in np.flatnonzero(np.isnan(total)):
            v[i] = math.exp(m.l * math.log(rr[i]) + m.log_prefactor
                            + specfun.euler_log_hyp2f1(p, -rr[i] ** 2))
        vals[ser] = v
    out[pos] = vals
    if not np.all(np.isfinite(out)):
        raise OverflowError(f"f_l overflow for l={m.l}; outside supported envelope")
    return float(out[0]) if scalar else out


def log_f_l(m, r):
    """log f_l(r), finite even where f_l underflows (large l, small r)."""
    r = np.atleast_1d(_as_array(r))
    with np.errstate(divide="ignore"):
        lr = np.log(r)
    out = m.l * lr + m.log_prefactor
    pos = r > 0
    out[pos] += specfun.log_hyp2f1_negaxis(m.params, -r[pos] ** 2)
    return out


# -- inhomogeneous mode ------------------------------------------------------
#
# With v = tan(psi) the inner integral is int_0^phi sin^{d-1}, phi = arctan u,
# so the outer integrand is F(u) = 2 gamma_d I(phi) / sin^{d-1}(phi). Its
# complement 1 - F decays like 2 gamma_d / u and is integrated separately
# (f0_hat), which keeps r - f_0(r) free of cancellation at large r.

_INNER = gauss_legendre(24)
_PANEL_BREAKS = np.concatenate([[0.0, 0.25, 0.5], 2.0 ** np.arange(0, 63)])


def _sin_power_integral(upper, power):
    # int_0^upper sin^power(psi) dpsi, vectorised over upper in [0, pi/2]
    x, w, _, _ = _INNER.points(0.0, 1.0)
    return upper * (np.sin(np.outer(upper, x)) ** power @ w)


def _cos_power_integral(upper, power):
    x, w, _, _ = _INNER.points(0.0, 1.0)
    return upper * (np.cos(np.outer(upper, x)) ** power @ w)


def _f0_integrands(d, u):
    """Return (F, 1 - F) on an array of u > 0, each without cancellation."""
    u = np.asarray(u, dtype=float)
    g = gamma_d(d)
    F = np.empty(u.shape)
    G = np.empty(u.shape)
    zero = u == 0
    F[zero], G[zero] = 0.0, 1.0
    small = (u <= 1.0) & ~zero
    if np.any(small):
        us = u[small]
        phi = np.arctan(us)
        F[small] = 2 * g * _sin_power_integral(phi, d - 1) / np.sin(phi) ** (d - 1)
        G[small] = 1.0 - F[small]
    big = ~small & ~zero
    if np.any(big):
        ub = u[big]
        s_pow_m1 = np.expm1(-0.5 * (d - 1) * np.log1p(1.0 / (ub * ub)))
        J = _cos_power_integral(np.arctan(1.0 / ub), d - 1)
        G[big] = (s_pow_m1 + 2 * g * J) / (1.0 + s_pow_m1)
        F[big] = 1.0 - G[big]
    return F, G


@lru_cache(maxsize=None)
def _f0_cumulative(d):
    rule = gauss_legendre(32)
    a, b = _PANEL_BREAKS[:-1], _PANEL_BREAKS[1:]
    half = 0.5 * (b - a)
    x = (0.5 * (a + b))[:, None] + half[:, None] * rule.nodes[None, :]
    F, G = _f0_integrands(d, x.ravel())
    wts = half[:, None] * rule.weights[None, :]
    cum_f = np.concatenate([[0.0], np.cumsum((F.reshape(x.shape) * wts).sum(axis=1))])
    cum_g = np.concatenate([[0.0], np.cumsum((G.reshape(x.shape) * wts).sum(axis=1))])
    return cum_f, cum_g


_CHUNK = 8192


def _f0_partial(d, r):
    cum_f, cum_g = _f0_cumulative(d)
    j = np.clip(np.searchsorted(_PANEL_BREAKS, r, side="right") - 1, 0, len(_PANEL_BREAKS) - 2)
    lo = _PANEL_BREAKS[j]
    rule = gauss_legendre(32)
    half = 0.5 * (r - lo)
    x = (0.5 * (r + lo))[:, None] + half[:, None] * rule.nodes[None, :]
    F, G = _f0_integrands(d, x.ravel())
    part_f = (F.reshape(x.shape) @ rule.weights) * half
    part_g = (G.reshape(x.shape) @ rule.weights) * half
    return cum_f[j] + part_f, cum_g[j] + part_g


def _f0_pair(d, r):
    if d < 2:
        raise ValueError("dimension must be >= 2")
    r = _as_array(r)
    scalar = r.ndim == 0
    shape = np.shape(np.atleast_1d(r))
    r = np.ravel(r)
    if np.any(r > _PANEL_BREAKS[-1]):
        raise OverflowError("radius beyond the tabulated panel range")
    f0, fhat = np.empty(r.shape), np.empty(r.shape)
    # chunks bound the (n, 32, 24) node tensor
    for k in range(0, r.size, _CHUNK):
        f0[k : k + _CHUNK], fhat[k : k + _CHUNK] = _f0_partial(d, r[k : k + _CHUNK])
    if scalar:
        return float(f0[0]), float(fhat[0])
    return f0.reshape(shape), fhat.reshape(shape)


def f_0(d, r, rule=None):
    """Inhomogeneous mode 2 gamma_d int_0^r (u^2/(1+u^2))^{-(d-1)/2} int_0^u ... dv du.

    ``rule`` is accepted for interface symmetry; the panel rule is fixed at
    32-point Gauss-Legendre, which resolves every panel to rounding level.
    """
    if rule is not None and not isinstance(rule, QuadratureRule):
        raise TypeError("rule must be a QuadratureRule")
    return _f0_pair(d, r)[0]


def f0_hat(d, r):
    """r - f_0(r), integrated directly from 1 - F so it stays accurate for huge r."""
    return _f0_pair(d, r)[1]


#: offset in 0 <= f0_hat(r) <= F0HAT_A + 2 gamma_d log(1 + r), measured for d <= 10, r <= 1e8
F0HAT_A = 0.5


def f0_hat_envelope(d, r):
    """Upper envelope for f0_hat; the slope 2 gamma_d is the exact log-growth rate."""
    return F0HAT_A + 2 * gamma_d(d) * np.log1p(r)


def inner_integral(d, u):
    """int_0^u v^{d-1} / (1+v^2)^{(d+1)/2} dv; tends to 1/(2 gamma_d)."""
    phi = np.arctan(np.atleast_1d(np.asarray(u, dtype=float)))
    out = _sin_power_integral(phi, d - 1)
    return float(out[0]) if np.ndim(u) == 0 else out


# -- scale function ------------------------------------------------------------

_SCALE_BREAKS = 2.0 ** np.arange(-30, 63)
_ONE = 30  # index of u = 1 in _SCALE_BREAKS


def _scale_integrand(d, u):
    return np.exp(0.5 * (d - 1) * np.log1p(1.0 / (u * u)))


@lru_cache(maxsize=None)
def _scale_cumulative(d):
    rule = gauss_legendre(32)
    a, b = _SCALE_BREAKS[:-1], _SCALE_BREAKS[1:]
    half = 0.5 * (b - a)
    x = (0.5 * (a + b))[:, None] + half[:, None] * rule.nodes[None, :]
    panels = (_scale_integrand(d, x) @ rule.weights) * half
    # accumulate away from u = 1 in both directions; the panels near 0 are
    # huge for d >= 3 and a single cumsum would cancel every digit
    below = -np.cumsum(panels[:_ONE][::-1])[::-1]
    above = np.cumsum(panels[_ONE:])
    return np.concatenate([below, [0.0], above])


def scale_h(d, r, floor=SCALE_FLOOR):
    """int_1^r ((1+u^2)/u^2)^{(d-1)/2} du; -inf below ``floor``."""
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    if np.any(r <= 0):
        raise ValueError("scale function needs r > 0")
    out = np.full(r.shape, -np.inf)
    ok = r >= max(floor, _SCALE_BREAKS[0])
    rr = r[ok]
    cum = _scale_cumulative(d)
    j = np.clip(np.searchsorted(_SCALE_BREAKS, rr, side="right") - 1, 0, len(_SCALE_BREAKS) - 2)
    lo = _SCALE_BREAKS[j]
    rule = gauss_legendre(32)
    half = 0.5 * (rr - lo)
    x = (0.5 * (rr + lo))[:, None] + half[:, None] * rule.nodes[None, :]
    out[ok] = cum[j] + (_scale_integrand(d, x) @ rule.weights) * half
    return float(out[0]) if scalar else out


# -- decay envelope -----------------------------------------------------------

def decay_delta(R):
    """Midpoint between R/sqrt(1+R^2) and 1."""
    return 0.5 * (R / math.sqrt(1.0 + R * R) + 1.0)


def decay_envelope(d, R, l):
    if l < 1:
        raise ValueError("envelope defined for l >= 1")
    return decay_delta(R) ** l


def decay_onset(d, R, l_max=60, n_grid=64):
    """Smallest L0 with sup_{r<=R} f_l(r) <= delta^l for every l in [L0, l_max].

    Comparison is done in logs so underflowing modes still count. Returns
    ``l_max + 1`` if the bound fails at ``l_max``.
    """
    grid = np.linspace(R / n_grid, R, n_grid)
    log_delta = math.log(decay_delta(R))
    onset = 1
    for l in range(1, l_max + 1):
        sup = float(np.max(log_f_l(mode(d, l), grid)))
        if sup > l * log_delta:
            onset = l + 1
    return onset


# -- finite-difference residuals ------------------------------------------------

def fd_step(r, base=1e-4):
    return base * np.maximum(1.0, r)


def _derivs(fun, r, h):
    fp, f0, fm = fun(np.array([r + h, r, r - h]))
    return f0, (fp - fm) / (2 * h), (fp - 2 * f0 + fm) / (h * h)


def mode_residual(d, l, r, h=None):
    """|A_R f_l - l(l+d-2)/(2 r^2) f_l| at r by central differences."""
    h = fd_step(r) if h is None else h
    m = mode(d, l)
    f, fp, fpp = _derivs(lambda s: f_l(m, s), r, h)
    return abs(0.5 * (1 + r * r) * fpp + (d - 1) / (2 * r) * fp - l * (l + d - 2) / (2 * r * r) * f)


def f0_residual(d, r, h=None):
    """|A_R f_0 - gamma_d| at r by central differences.

    Differences are taken of f0_hat = r - f_0, which is O(log r); the linear
    part is applied exactly (A_R r = (d-1)/(2r)). Differencing f_0 ~ r
    directly would amplify its rounding by r^2/h^2.
    """
    h = fd_step(r) if h is None else h
    _, fp, fpp = _derivs(lambda s: f0_hat(d, s), r, h)
    a_lin = (d - 1) / (2 * r)
    return abs(a_lin - (0.5 * (1 + r * r) * fpp + a_lin * fp) - gamma_d(d))
