"""Special functions: log-gamma, the sphere constant, 2F1 on the negative axis,
and Gegenbauer polynomials.

Only the negative real axis and the parameter family
``a = l/2, b = (l-1)/2, c = l + d/2`` are guaranteed to the stated accuracy.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .quadrature import tanh_sinh


class ConvergenceError(ArithmeticError):
    """A series exhausted its term budget before its tail bound was met."""


# -- log gamma ---------------------------------------------------------------

_EULER_GAMMA = 0.5772156649015329
_ZETA_2_9 = (
    1.6449340668482264, 1.2020569031595942, 1.0823232337111381,
    1.03692775514337, 1.0173430619844492, 1.008349277381923,
    1.0040773561979444, 1.0020083928260821,
)
_STIRLING = (
    1.0 / 12, -1.0 / 360, 1.0 / 1260, -1.0 / 1680,
    1.0 / 1188, -691.0 / 360360, 1.0 / 156, -3617.0 / 122400,
)


def _zeta(k):
    if k <= 9:
        return _ZETA_2_9[k - 2]
    n = np.arange(2, 64, dtype=float)
    return 1.0 + float(np.sum(n ** -float(k)))


# lgamma(1 + e) = -gamma e + sum_{k>=2} (-1)^k zeta(k) e^k / k
_TAYLOR_1 = np.array([(-1.0) ** k * _zeta(k) / k for k in range(2, 72)])


def _lgamma_near_one(e):
    # |e| <= 0.5; Horner from the top coefficient
    acc = 0.0
    for coef in _TAYLOR_1[::-1]:
        acc = acc * e + coef
    return e * (-_EULER_GAMMA + e * acc)


def _lgamma_stirling(x):
    inv = 1.0 / x
    inv2 = inv * inv
    acc = 0.0
    for coef in _STIRLING[::-1]:
        acc = acc * inv2 + coef
    return (x - 0.5) * math.log(x) - x + 0.5 * math.log(2 * math.pi) + acc * inv


def log_gamma(x):
    """ln Gamma(x) for x > 0.

    Taylor series about 1 on [0.5, 1.5], downward recurrence into that window
    below 12, Stirling with eight Bernoulli terms above.
    """
    x = float(x)
    if not x > 0:
        raise ValueError(f"log_gamma needs x > 0, got {x}")
    if x < 0.5:
        return _lgamma_near_one(x) - math.log(x)
    if x <= 1.5:
        return _lgamma_near_one(x - 1.0)
    if x >= 12.0:
        return _lgamma_stirling(x)
    acc = 0.0
    while x > 1.5:
        x -= 1.0
        acc += math.log(x)
    return acc + _lgamma_near_one(x - 1.0)


def gamma_d(d):
    """Gamma((d+1)/2) / (sqrt(pi) Gamma(d/2)), the constant tying c to the mean of g."""
    if int(d) != d or d < 2:
        raise ValueError(f"dimension must be an integer >= 2, got {d}")
    return math.exp(log_gamma((d + 1) / 2) - log_gamma(d / 2) - 0.5 * math.log(math.pi))


# -- Gauss hypergeometric on the negative axis ------------------------------

@dataclass(frozen=True)
class HypParams:
    a: float
    b: float
    c: float

    def __post_init__(self):
        if self.c <= 0 and float(self.c).is_integer():
            raise ValueError("c must not be zero or a negative integer")

    @classmethod
    def radial(cls, l, d):
        """Parameters of the degree-l radial mode in dimension d."""
        return cls(l / 2, (l - 1) / 2, l + d / 2)


SERIES_CAP = 50_000
SERIES_RTOL = 1e-16
_CHUNK = 1024
_FIRST_CHUNK = 64


def _coef_length(n):
    # round cache keys up to a multiple of _CHUNK so lru entries are shared
    return -(-n // _CHUNK) * _CHUNK


def _lgamma_ratio_sign(*args):
    # log|Gamma| and sign for possibly negative non-integer arguments
    total, sign = 0.0, 1.0
    for x, power in args:
        if x > 0:
            total += power * log_gamma(x)
        else:
            if float(x).is_integer():
                raise ValueError(f"gamma pole at {x}")
            # reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
            s = math.sin(math.pi * x)
            total += power * (math.log(math.pi / abs(s)) - log_gamma(1 - x))
            if s < 0 and power % 2:
                sign = -sign
    return total, sign


@lru_cache(maxsize=256)
def _log_coefficients(A, B, C, n_terms):
    # log of (A)_n (B)_n / ((C)_n n!); r-independent, so rounding is shared
    # between neighbouring arguments and finite differences stay clean
    n = np.arange(n_terms - 1, dtype=float)
    steps = np.log((A + n) * (B + n) / ((C + n) * (1.0 + n)))
    out = np.empty(n_terms)
    out[0] = 0.0
    out[1:] = np.cumsum(steps)
    return out


def _pfaff_series(p, z, rtol=SERIES_RTOL, cap=SERIES_CAP, logz=None):
    """Sum_n (c-a)_n (b)_n / ((c)_n n!) z^n for an array z in [0, 1).

    All terms are positive for the supported family. The coefficient ratio
    rho_n = (A+n)(B+n)/((C+n)(1+n)) satisfies rho_k <= max(rho_n, 1) for
    k >= n, so with q = z max(rho_n, 1) < 1 the tail after term n is at most
    T_n q/(1-q); summation stops once that is below rtol * S. Elements still
    running at ``cap`` come back NaN.
    Pass ``logz`` when it is known more accurately than ``log(z)``; near
    z = 1 its relative error is multiplied by the term index.
    """
    A, B, C = p.c - p.a, p.b, p.c
    z = np.asarray(z, dtype=float)
    out = np.full(z.shape, np.nan)
    active = np.flatnonzero(z > 0)
    out[z == 0] = 1.0
    logz = np.log(z[active]) if logz is None else np.asarray(logz, dtype=float)[active]
    za = z[active]
    total = np.zeros(active.shape)
    n0, width = 0, _FIRST_CHUNK
    while active.size and n0 < cap:
        # chunks double up to _CHUNK; small z finishes in the first one
        logc = _log_coefficients(A, B, C, _coef_length(n0 + width))[n0 : n0 + width]
        n = np.arange(n0, n0 + width, dtype=float)
        with np.errstate(invalid="ignore"):
            expo = logc[None, :] + n[None, :] * logz[:, None]
        block = np.exp(expo)
        total = total + block.sum(axis=1)
        term = block[:, -1]
        last = n0 + width - 1
        rho = (A + last) * (B + last) / ((C + last) * (1.0 + last))
        q = za * max(rho, 1.0)
        n0 += width
        width = min(2 * width, _CHUNK)
        with np.errstate(divide="ignore"):
            bound = np.where(q < 1.0, term * q / (1.0 - q), np.inf)
        done = (bound <= rtol * total) | (term == 0)
        if np.any(done):
            out[active[done]] = total[done]
            keep = ~done
            active, logz, za, total = active[keep], logz[keep], za[keep], total[keep]
    if not np.all(np.isfinite(out[np.isfinite(out)])):
        raise OverflowError("series overflow; degree outside supported range")
    return out


def _inverse_parts(p, x):
    """Pieces of the connection formula in 1/x (DLMF 15.8.2) for x < 0.

    2F1 = G2 (-x)^-b [F2 + ratio (-x)^(b-a) F1] with
    F1 = 2F1(a, a-c+1; a-b+1; 1/x), F2 = 2F1(b, b-c+1; b-a+1; 1/x),
    ratio = G1/G2. Returns (F1, F2, ratio, log G2).
    """
    a, b, c = p.a, p.b, p.c
    w = 1.0 / np.asarray(x, dtype=float)
    f1 = _plain_series(a, a - c + 1, a - b + 1, w)
    f2 = _plain_series(b, b - c + 1, b - a + 1, w)
    lg2, s2 = _lgamma_ratio_sign((c, 1), (a - b, 1), (a, -1), (c - b, -1))
    lg1, s1 = _lgamma_ratio_sign((c, 1), (b - a, 1), (b, -1), (c - a, -1))
    return f1, f2, s1 * s2 * math.exp(lg1 - lg2), lg2


def _inverse_route(p, x):
    """log 2F1 from the 1/x connection formula; only used for large |x|."""
    f1, f2, ratio, lg2 = _inverse_parts(p, x)
    mx = -np.asarray(x, dtype=float)
    bracket = f2 + ratio * mx ** (p.b - p.a) * f1
    return lg2 - p.b * np.log(mx) + np.log(bracket)


def _plain_series(a, b, c, w, rtol=1e-17, max_terms=400):
    w = np.asarray(w, dtype=float)
    term = np.ones(w.shape)
    total = np.ones(w.shape)
    for n in range(max_terms):
        term = term * (a + n) * (b + n) / ((c + n) * (n + 1.0)) * w
        total = total + term
        if np.all(np.abs(term) <= rtol * np.abs(total)):
            return total
    raise ConvergenceError("inverse-argument series did not converge")


def _inverse_route_ok(p, x):
    # first-term ratios of the two 1/x series must be small
    a, b, c = p.a, p.b, p.c
    k = max(abs(a * (a - c + 1)) / abs(a - b + 1), abs(b * (b - c + 1)) / abs(b - a + 1), 1.0)
    return -np.asarray(x) >= 2.0 * k


def euler_log_hyp2f1(p, x, rule=None):
    """log 2F1 via Euler's integral, substituting t = s^2 (needs c > b > 0).

    Gamma(c)/(Gamma(b)Gamma(c-b)) * int_0^1 2 s^(2b-1) (1-s^2)^(c-b-1) (1-x s^2)^(-a) ds
    """
    a, b, c = p.a, p.b, p.c
    if not (c > b > 0):
        raise ValueError("Euler integral route needs c > b > 0")
    rule = rule or tanh_sinh(7)
    x = float(x)
    # split where the (1 - x s^2) factor turns over
    knee = min(0.5, 1.0 / math.sqrt(1.0 - x)) if x < 0 else 0.5
    logs = []
    for lo, hi in ((0.0, knee), (knee, 1.0)):
        s, wts, d_lo, d_hi = rule.points(lo, hi)
        one_minus = d_hi if hi == 1.0 else (1.0 - s)
        val = (math.log(2.0) + (2 * b - 1) * np.log(s)
               + (c - b - 1) * (np.log(one_minus) + np.log1p(s))
               - a * np.log1p(-x * s * s))
        logs.append((val, wts))
    peak = max(float(np.max(v)) for v, _ in logs)
    integral = sum(float(np.dot(w, np.exp(v - peak))) for v, w in logs)
    norm = log_gamma(c) - log_gamma(b) - log_gamma(c - b)
    return norm + peak + math.log(integral)


def log_hyp2f1_negaxis(p, x):
    """log 2F1(a, b; c; x) for x <= 0 (scalar or array), all routes combined."""
    x = np.asarray(x, dtype=float)
    if np.any(x > 0):
        raise ValueError("argument must be <= 0")
    out = np.zeros(x.shape)
    if p.b == 0 or p.a == 0:
        return out
    mask = x < 0
    xs = x[mask]
    res = np.empty(xs.shape)
    inv = _inverse_route_ok(p, xs)
    if np.any(inv):
        res[inv] = _inverse_route(p, xs[inv])
    ser = ~inv
    if np.any(ser):
        z = xs[ser] / (xs[ser] - 1.0)
        # Pfaff: 2F1(a,b;c;x) = (1-x)^-b 2F1(c-a, b; c; x/(x-1))
        logz = np.log(-xs[ser]) - np.log1p(-xs[ser])
        vals = -p.b * np.log1p(-xs[ser]) + np.log(_pfaff_series(p, z, logz=logz))
        bad = np.isnan(vals)
        for i in np.flatnonzero(bad):
            vals[i] = euler_log_hyp2f1(p, xs[ser][i])
        res[ser] = vals
    out[mask] = res
    return out


def hyp2f1_negaxis(p, x):
    """2F1(a, b; c; x) on x <= 0 by Pfaff transformation and a positive series."""
    val = np.exp(log_hyp2f1_negaxis(p, x))
    return float(val) if np.ndim(val) == 0 else val


def hyp2f1_series_only(p, x, cap=SERIES_CAP):
    """Pfaff-series value without fallbacks; raises ConvergenceError past ``cap``."""
    x = float(x)
    if x > 0:
        raise ValueError("argument must be <= 0")
    if x == 0 or p.b == 0:
        return 1.0
    z = x / (x - 1.0)
    total = _pfaff_series(p, np.array([z]), cap=cap)[0]
    if np.isnan(total):
        raise ConvergenceError(f"series tail bound not met within {cap} terms at x={x}")
    return math.exp(-p.b * math.log1p(-x)) * total


def hyp2f1_tail_limit(p):
    """lim_{x -> -inf} (1-x)^b 2F1(a,b;c;x) = Gamma(c)Gamma(a-b) / (Gamma(c-b)Gamma(a))."""
    if not p.a - p.b > 0:
        raise ValueError("need a - b > 0")
    for arg in (p.c, p.a - p.b, p.c - p.b, p.a):
        if arg <= 0 and float(arg).is_integer():
            raise ValueError(f"gamma argument {arg} is a nonpositive integer")
    lg, sign = _lgamma_ratio_sign((p.c, 1), (p.a - p.b, 1), (p.c - p.b, -1), (p.a, -1))
    return sign * math.exp(lg)


# -- Gegenbauer ---------------------------------------------------------------

def gegenbauer(l, alpha, t):
    """C_l^alpha(t) by the three-term recurrence.

    ``alpha == 0`` returns the Chebyshev polynomial T_l, the zonal profile used
    on the circle (C_l^alpha / alpha tends to (2/l) T_l).
    """
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1 + 1e-12):
        raise ValueError("t must lie in [-1, 1]")
    if alpha == 0:
        out = np.cos(l * np.arccos(np.clip(t, -1.0, 1.0)))
        return float(out) if out.ndim == 0 else out
    prev = np.ones_like(t)
    if l == 0:
        return float(prev) if prev.ndim == 0 else prev
    cur = 2 * alpha * t
    for k in range(2, l + 1):
        prev, cur = cur, (2 * (k + alpha - 1) * t * cur - (k + 2 * alpha - 2) * prev) / k
    return float(cur) if cur.ndim == 0 else cur


@lru_cache(maxsize=None)
def gegenbauer_at_one(l, alpha):
    if alpha == 0:
        return 1.0
    # C_l^alpha(1) = (2 alpha)_l / l!
    return math.exp(log_gamma(l + 2 * alpha) - log_gamma(2 * alpha) - log_gamma(l + 1))


def zonal_polynomial(l, d, t):
    """Degree-l zonal profile on S^{d-1}, normalised to 1 at t = 1."""
    alpha = (d - 2) / 2
    return gegenbauer(l, alpha, t) / gegenbauer_at_one(l, alpha)


def harmonic_dimension(l, d):
    """Dimension of the space of degree-l spherical harmonics on S^{d-1}."""
    if l == 0:
        return 1
    if d == 2:
        return 2
    return round((2 * l + d - 2) / (l + d - 2) * math.comb(l + d - 2, l))
