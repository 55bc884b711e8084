"""Series solution of (1/2) sum_ij (delta_ij + x_i x_j) u_ij = c with u(r th)/r -> g(th).

u(r th) = f_0(r) g_0 + sum_{l>=1} f_l(r) g_l(th), with c = gamma_d * mean(g).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import harmonics, radial
from .harmonics import apriori_block_bound, project
from .specfun import gamma_d

L_CAP = 128
TAIL_TARGET = 1e-8


def directions(d, n, seed=0):
    """Deterministic, roughly uniform unit vectors.

    d = 2: equally spaced angles; d >= 3: normalised Gaussian draws from a
    fixed stream, so every call with the same arguments returns the same set.
    """
    if d == 2:
        ang = 2 * np.pi * (np.arange(n) + 0.5) / n
        return np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, d, n])))
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def meridian(axis, n):
    """Unit vectors spanning t = <theta, axis> in [-1, 1]; enough for zonal data."""
    axis = np.asarray(axis, dtype=float)
    d = axis.size
    other = np.eye(d)[np.argmin(np.abs(axis))]
    perp = other - (other @ axis) * axis
    perp /= np.linalg.norm(perp)
    ang = np.pi * np.arange(n) / (n - 1)
    return np.cos(ang)[:, None] * axis + np.sin(ang)[:, None] * perp


def sample_points(d, radii, n_dirs, seed=0):
    dirs = directions(d, n_dirs, seed)
    return (np.asarray(radii, dtype=float)[:, None, None] * dirs[None]).reshape(-1, d)


@dataclass(frozen=True)
class EllipticSolution:
    d: int
    g: harmonics.BoundarySpec = field(repr=False)
    spectrum: harmonics.HarmonicSpectrum = field(repr=False)
    L: int
    c: float
    #: spectrum computed past L, feeding the tail majorant
    extended: harmonics.HarmonicSpectrum = field(repr=False, default=None)

    def __call__(self, x):
        return self.evaluate(x, with_tail=False)[0]

    def evaluate(self, x, with_tail=True):
        return evaluate(self, x, with_tail=with_tail)

    def tail_bound(self, R):
        return tail_bound(self, R)

    @property
    def tail_bound_fn(self):
        return lambda R: tail_bound(self, R)

    @property
    def active_degrees(self):
        tol = 1e-15 * max(1.0, float(np.max(self.spectrum.sup_norms)))
        return [l for l in range(self.L + 1) if self.spectrum.sup_norms[l] > tol]


def constant_c(g):
    return gamma_d(g.d) * harmonics.mean(g)


def _degree_tails(g, ext, R):
    """Suffix sums of sup|g_l| * sup_{r<=R} f_l(r) over l = 0..len(ext)-1, plus the remainder past it.

    f_l increases in r, so its sup over [0, R] is f_l(R).
    """
    n = ext.L + 1
    terms = np.zeros(n)
    for l in range(1, n):
        if ext.sup_norms[l] > 0:
            terms[l] = ext.sup_norms[l] * radial.f_l(radial.mode(g.d, l), R)
    suffix = np.concatenate([np.cumsum(terms[::-1])[::-1], [0.0]])
    return suffix, _remainder(g, ext.L, R)


def _remainder(g, L_ext, R):
    """Sum over l > L_ext of a-priori block bounds times delta_R^l."""
    if R == 0:
        return 0.0
    d = g.d
    delta = radial.decay_delta(R)
    m = radial.mode(d, L_ext)
    # the envelope must already hold at L_ext
    if radial.log_f_l(m, np.array([R]))[0] > L_ext * math.log(delta):
        return math.inf
    sup_g = g.sup_norm()
    if d == 2:
        return 2.0 * sup_g * delta ** (L_ext + 1) / (1.0 - delta)
    total, l = 0.0, L_ext + 1
    while True:
        term = apriori_block_bound(l, d, sup_g) * delta ** l
        total += term
        if term < 1e-18 * max(total, 1e-300) or l > 10**6:
            return total
        l += 1


def choose_L(g, R, target=TAIL_TARGET, cap=L_CAP):
    """Smallest truncation whose tail majorant at radius R is below ``target``."""
    if g.band is not None:
        return g.band
    ext = project(g, harmonics.MAX_DEGREE)
    suffix, rem = _degree_tails(g, ext, R)
    for L in range(cap + 1):
        if suffix[L + 1] + rem < target:
            return L
    return cap


def solve(g, L=None, radius=10.0):
    """Series solution truncated at degree L (chosen from the tail rule when None)."""
    if L is None:
        L = choose_L(g, radius)
    if L < 0:
        raise ValueError("L must be >= 0")
    band = g.band
    if band is not None:
        spec = project(g, max(L, band)).truncated(L)
        ext = None
    else:
        # degrees past L up to MAX_DEGREE enter the tail exactly
        ext = project(g, max(L, harmonics.MAX_DEGREE))
        spec = ext.truncated(L)
    c = gamma_d(g.d) * spec.mean
    return EllipticSolution(g.d, g, spec, L, c, ext)


def tail_bound(u, R):
    if u.g.band is not None and u.g.band <= u.L:
        return 0.0
    if R == 0:
        return 0.0
    ext = u.extended
    suffix, rem = _degree_tails(u.g, ext, R)
    return float(suffix[u.L + 1] + rem)


def evaluate(u, x, with_tail=True):
    """Partial sum through degree L at points ``x`` (n, d) or (d,).

    Returns (values, tail_bounds) with the tail majorant evaluated at |x|.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != u.d:
        raise ValueError(f"points must have {u.d} components")
    r = np.linalg.norm(x, axis=1)
    values = np.zeros(len(x))
    pos = r > 0
    if np.any(pos):
        rr, inverse = np.unique(r[pos], return_inverse=True)
        theta = x[pos] / r[pos][:, None]
        acc = np.zeros(pos.sum())
        g0 = u.spectrum.mean
        if g0 != 0:
            acc += g0 * radial.f_0(u.d, rr)[inverse]
        for l in u.active_degrees:
            if l == 0:
                continue
            radial_part = radial.f_l(radial.mode(u.d, l), rr)[inverse]
            acc += radial_part * u.spectrum.block(l, theta)
        values[pos] = acc
    if with_tail:
        tails = _tails_by_radius(u, r)
    else:
        tails = np.zeros(len(x))
    if single:
        return float(values[0]), float(tails[0])
    return values, tails


def _tails_by_radius(u, r):
    uniq, inv = np.unique(r, return_inverse=True)
    return np.array([tail_bound(u, R) for R in uniq])[inv]


def hessian_stencil(x, h):
    """Stencil points for the full central-difference Hessian at each row of x.

    Returns (points, assemble) where assemble(values) -> Hessians (n, d, d).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, d = x.shape
    h = np.broadcast_to(np.asarray(h, dtype=float), (n,))
    eye = np.eye(d)
    offsets = [np.zeros(d)]
    for i in range(d):
        offsets += [eye[i], -eye[i]]
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    for i, j in pairs:
        offsets += [eye[i] + eye[j], eye[i] - eye[j], -eye[i] + eye[j], -eye[i] - eye[j]]
    offsets = np.array(offsets)
    pts = x[:, None, :] + h[:, None, None] * offsets[None, :, :]

    def assemble(vals):
        vals = np.asarray(vals).reshape(n, len(offsets))
        H = np.empty((n, d, d))
        c = vals[:, 0]
        h2 = h * h
        for i in range(d):
            H[:, i, i] = (vals[:, 1 + 2 * i] - 2 * c + vals[:, 2 + 2 * i]) / h2
        base = 1 + 2 * d
        for k, (i, j) in enumerate(pairs):
            pp, pm, mp, mm = (vals[:, base + 4 * k + q] for q in range(4))
            H[:, i, j] = H[:, j, i] = (pp - pm - mp + mm) / (4 * h2)
        return H

    return pts.reshape(-1, d), assemble


def residual(u, x, h_fd=3e-4):
    """|(1/2) sum_ij (delta_ij + x_i x_j) H_ij - c| with H the FD Hessian of u.

    The step on each axis is h_fd * max(1, |x|).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    r = np.linalg.norm(x, axis=1)
    h = h_fd * np.maximum(1.0, r)
    if np.any(r <= h):
        raise ValueError("residual needs |x| > h_fd; the origin is excluded")
    pts, assemble = hessian_stencil(x, h)
    H = assemble(u(pts))
    coef = np.eye(u.d)[None] + x[:, :, None] * x[:, None, :]
    res = np.abs(0.5 * np.einsum("nij,nij->n", coef, H) - u.c)
    return float(res[0]) if single else res


def _gap_directions(g, n_dirs):
    if g.d == 2 or not g.is_zonal:
        return directions(g.d, n_dirs)
    return meridian(np.asarray(g.axis), n_dirs)


def boundary_gap(u, g, r, n_dirs=64):
    """max over sampled directions of |u(r th)/r - g(th)|."""
    if r <= 0 or n_dirs < 8:
        raise ValueError("need r > 0 and n_dirs >= 8")
    th = _gap_directions(g, n_dirs)
    return float(np.max(np.abs(u(r * th) / r - g(th))))


def max_principle_ratio(u, g, x_samples):
    """max |u(x)| / ((1+|x|) sup|g|): an empirical lower bound for the linear-growth constant."""
    m = harmonics.mean(g)
    if abs(m) > 1e-10:
        raise ValueError(f"boundary data must have mean zero, got {m:.3e}")
    x = np.atleast_2d(np.asarray(x_samples, dtype=float))
    if len(x) == 0:
        raise ValueError("need at least one sample")
    sup_g = g.sup_norm()
    r = np.linalg.norm(x, axis=1)
    return float(np.max(np.abs(u(x)) / ((1 + r) * sup_g)))


def default_ratio_samples(d, n_radii=24, n_dirs=32, r_max=100.0):
    radii = np.geomspace(1e-2, r_max, n_radii)
    return sample_points(d, radii, n_dirs)
