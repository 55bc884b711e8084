"""Convexity verdicts for the solution u and the cone function v(x) = |x| g(x/|x|)."""

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from . import solver

CONVEX = "convex_within_tolerance"
NONCONVEX = "nonconvex_witness_found"


class ConditioningWarning(RuntimeWarning):
    """Function variation across an FD stencil is near rounding level."""


@dataclass(frozen=True)
class Witness:
    x: tuple
    y: tuple
    alpha: float
    violation: float

    def recheck(self, w):
        x, y = np.array(self.x), np.array(self.y)
        return float(_violation(w, x[None], y[None], np.array([self.alpha]))[0])


@dataclass(frozen=True)
class ConvexityReport:
    verdict: str
    min_hessian_eigenvalue: float
    witness: Witness = None
    max_violation: float = -math.inf
    tol: float = 0.0
    eig_tol: float = 0.0
    hessian_verdict: str = None
    exclusion_radius: float = 0.05

    @property
    def convex(self):
        return self.verdict == CONVEX

    @property
    def consistent(self):
        """Hessian and midpoint criteria give the same answer."""
        return self.hessian_verdict in (None, self.verdict)

    def to_dict(self):
        out = asdict(self)
        out["consistent"] = self.consistent
        return out


def cone_function(g):
    """v(x) = |x| g(x/|x|) on arrays of shape (n, d) or (d,), with v(0) = 0."""

    def v(x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        rad = np.linalg.norm(X, axis=1)
        out = np.zeros(len(X))
        pos = rad > 0
        out[pos] = rad[pos] * g(X[pos] / rad[pos, None])
        return float(out[0]) if single else out

    return v


def hessian_eigs(w, probe, h_fd=1e-3):
    """Smallest eigenvalue of the central-difference Hessian at each probe point.

    The step is h_fd * max(1, |x|).
    """
    probe = np.atleast_2d(np.asarray(probe, dtype=float))
    h = h_fd * np.maximum(1.0, np.linalg.norm(probe, axis=1))
    pts, assemble = solver.hessian_stencil(probe, h)
    vals = np.asarray(w(pts))
    stencil = vals.reshape(len(probe), -1)
    spread = stencil.max(axis=1) - stencil.min(axis=1)
    flat = spread < 100 * np.finfo(float).eps * np.maximum(1.0, np.abs(stencil[:, 0]))
    if flat.any():
        warnings.warn(f"{int(flat.sum())} probe(s) with stencil variation near rounding",
                      ConditioningWarning, stacklevel=2)
    return np.linalg.eigvalsh(assemble(vals))[:, 0]


def hessian_min_eig(w, probe, h_fd=1e-3):
    return float(np.min(hessian_eigs(w, probe, h_fd)))


def _violation(w, x, y, alpha):
    z = alpha[:, None] * x + (1 - alpha)[:, None] * y
    return w(z) - (alpha * w(x) + (1 - alpha) * w(y))


class BallSampler:
    """Point pairs uniform in a ball of given radius, alpha uniform on [0, 1]."""

    def __init__(self, d, radius=1.0, seed=0):
        self.d, self.radius, self.seed = d, radius, seed

    def _ball(self, rng, n):
        v = rng.standard_normal((n, self.d))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return v * (self.radius * rng.random(n) ** (1.0 / self.d))[:, None]

    def __call__(self, n):
        rng = np.random.default_rng([self.seed, self.d, n])
        return self._ball(rng, n), self._ball(rng, n), rng.random(n)

    def shell(self, n, inner):
        """Probe points with inner <= |x| <= radius."""
        rng = np.random.default_rng([self.seed, self.d, n, 1])
        v = rng.standard_normal((n, self.d))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        lo, hi = inner ** self.d, self.radius ** self.d
        return v * ((lo + (hi - lo) * rng.random(n)) ** (1.0 / self.d))[:, None]


def _refine(w, x, y, alpha):
    """Maximise the violation over alpha along the segment [y, x]."""
    res = minimize_scalar(lambda a: -_violation(w, x[None], y[None], np.array([a]))[0],
                          bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-10})
    best = -res.fun
    base = _violation(w, x[None], y[None], np.array([alpha]))[0]
    return (float(res.x), float(best)) if best > base else (float(alpha), float(base))


def midpoint_scan(w, sampler, n, tol=None, chunk=20_000):
    """Check w(a x + (1-a) y) <= a w(x) + (1-a) w(y) + tol over n sampled triples.

    ``sampler(n)`` returns (x, y, alpha).  With ``tol=None`` the tolerance is
    1e-9 * (1 + max |w| over the sampled endpoints).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x, y, alpha = sampler(n)
    viol = np.empty(n)
    scale = 0.0
    for k in range(0, n, chunk):
        s = slice(k, k + chunk)
        wx, wy = w(x[s]), w(y[s])
        z = alpha[s, None] * x[s] + (1 - alpha[s])[:, None] * y[s]
        viol[s] = w(z) - (alpha[s] * wx + (1 - alpha[s]) * wy)
        scale = max(scale, float(np.max(np.abs(wx))), float(np.max(np.abs(wy))))
    if tol is None:
        tol = 1e-9 * (1.0 + scale)
    i = int(np.argmax(viol))
    if viol[i] <= tol:
        return ConvexityReport(CONVEX, math.nan, None, float(viol[i]), tol)
    a, v = _refine(w, x[i], y[i], alpha[i])
    wit = Witness(tuple(map(float, x[i])), tuple(map(float, y[i])), a, v)
    return ConvexityReport(NONCONVEX, math.nan, wit, v, tol)


@dataclass(frozen=True)
class ProbeConfig:
    n_pairs: int = 20_000
    n_probes: int = 512
    radius: float = 2.0
    exclusion: float = 0.05
    h_fd: float = 1e-3
    #: eigenvalue tolerance relative to 1 + max |w| at the probes
    eig_rtol: float = 1e-5
    seed: int = 0

    def refined(self):
        """Halved FD step, doubled sample counts, shifted seed."""
        return ProbeConfig(2 * self.n_pairs, 2 * self.n_probes, self.radius, self.exclusion,
                           self.h_fd / 2, self.eig_rtol, self.seed + 1)


def convexity_report(w, d, probe, extra_tol=0.0):
    """Midpoint scan plus Hessian probes; the verdict follows the midpoint certificate.

    ``extra_tol`` widens the midpoint tolerance, e.g. by the truncation tail of
    a series solution.
    """
    sampler = BallSampler(d, probe.radius, probe.seed)
    pts = sampler.shell(probe.n_probes, probe.exclusion)
    eigs = hessian_eigs(w, pts, probe.h_fd)
    scale = float(np.max(np.abs(w(pts))))
    eig_tol = probe.eig_rtol * (1.0 + scale)
    hverdict = CONVEX if eigs.min() >= -eig_tol else NONCONVEX
    x, y, a = sampler(probe.n_pairs)
    tol = 1e-9 * (1.0 + max(scale, float(np.max(np.abs(w(x)))))) + extra_tol
    mid = midpoint_scan(w, lambda n: (x, y, a), probe.n_pairs, tol=tol)
    return ConvexityReport(mid.verdict, float(eigs.min()), mid.witness, mid.max_violation,
                           tol, eig_tol, hverdict, probe.exclusion)


def theorem2_harness(g, L=None, probe=None):
    """Convexity verdicts for u and v; returns (u_report, v_report, agree)."""
    probe = probe or ProbeConfig()
    u = solver.solve(g, L, radius=probe.radius)
    # partial sums are within the tail bound of u, so midpoint tests allow 2 tails
    tail = u.tail_bound(probe.radius)
    u_rep = convexity_report(u, g.d, probe, extra_tol=2 * tail)
    v_rep = convexity_report(cone_function(g), g.d, probe)
    return u_rep, v_rep, u_rep.verdict == v_rep.verdict
