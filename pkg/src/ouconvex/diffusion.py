"""Monte Carlo for dX = X dB + dW, simulated as the affine flow X^x(t) = M(t) x + N(t).

Per step: M <- M exp(dB - dt/2), N <- exp(dB - dt/2) N + dW, with dB scalar and
dW in R^d.  Paths are grouped in fixed blocks of :data:`BLOCK` paths; block k
of experiment ``tag`` draws from its own Philox stream seeded by
(seed, tag, k), so estimates do not depend on how blocks are spread over
worker threads.
"""

import math
import warnings
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import harmonics, radial
from .specfun import gamma_d

BLOCK = 4096


class McWarning(RuntimeWarning):
    """A Monte Carlo diagnostic fired (truncation tail, under-resolved step, rejections)."""


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 100_000
    dt: float = 1e-3
    t_max: float = 1.0
    seed: int = 0
    worker_streams: int = 1

    def __post_init__(self):
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ValueError("n_paths must be a positive integer")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_max < 0:
            raise ValueError("t_max must be nonnegative")
        if self.t_max > 0 and self.dt > self.t_max:
            raise ValueError("dt must not exceed t_max")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.worker_streams < 1:
            raise ValueError("worker_streams must be >= 1")

    def replace(self, **kw):
        return McConfig(**{**asdict(self), **kw})


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n: int
    rejected: int = 0

    @classmethod
    def from_samples(cls, values, rejected=0):
        values = np.asarray(values, dtype=float)
        n = len(values)
        se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        return cls(float(np.mean(values)), se, n, rejected)

    def within(self, reference, k=3.0, slack=0.0):
        return abs(self.mean - reference) <= k * self.std_error + slack

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class FlowSample:
    t_grid: np.ndarray
    M: np.ndarray
    N: np.ndarray

    def at(self, x):
        """X^x on the whole grid, shape (len(t_grid), d)."""
        return self.M[:, None] * np.asarray(x, dtype=float) + self.N


# -- streams and blocks -----------------------------------------------------------

def experiment_tag(name):
    return zlib.crc32(name.encode())


def stream(seed, tag, index):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, tag, index])))


def _blocks(n):
    return [(k, min(BLOCK, n - k * BLOCK)) for k in range(-(-n // BLOCK))]


def run_blocks(cfg, name, fn):
    """Apply ``fn(rng, n_block)`` to each block; results come back in block order."""
    tag = experiment_tag(name)
    jobs = _blocks(cfg.n_paths)

    def one(job):
        k, nb = job
        return fn(stream(cfg.seed, tag, k), nb)

    if cfg.worker_streams == 1 or len(jobs) == 1:
        return [one(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=cfg.worker_streams) as pool:
        return list(pool.map(one, jobs))


def _substeps(times, dt):
    """Split [0, t_1], [t_1, t_2], ... into equal steps no longer than dt."""
    out, prev = [], 0.0
    for t in times:
        span = t - prev
        n = max(1, math.ceil(span / dt - 1e-9)) if span > 0 else 0
        out.append((n, span / n if n else 0.0))
        prev = t
    return out


def _check_times(times):
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be nonnegative and nondecreasing")
    return times


def _flow_block(rng, n, d, times, dt):
    """(M, N) at each requested time for n paths: shapes (n, k) and (n, k, d)."""
    M = np.ones(n)
    N = np.zeros((n, d))
    Ms = np.empty((n, len(times)))
    Ns = np.empty((n, len(times), d))
    for j, (steps, h) in enumerate(_substeps(times, dt)):
        sq = math.sqrt(h)
        for _ in range(steps):
            e = np.exp(sq * rng.standard_normal(n) - 0.5 * h)
            M *= e
            N *= e[:, None]
            N += sq * rng.standard_normal((n, d))
        Ms[:, j] = M
        Ns[:, j] = N
    return Ms, Ns


def flow_at_times(d, times, cfg, name="flow"):
    """(M, N) samples at ``times`` for all cfg.n_paths paths."""
    times = _check_times(times)
    parts = run_blocks(cfg, name, lambda rng, nb: _flow_block(rng, nb, d, times, cfg.dt))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def sample_flow(d, cfg, rng_stream=0):
    """One realisation of (M, N) on the grid 0, dt, ..., t_max."""
    n_steps = max(0, math.ceil(cfg.t_max / cfg.dt - 1e-9)) if cfg.t_max > 0 else 0
    t_grid = np.linspace(0.0, cfg.t_max, n_steps + 1)
    rng = stream(cfg.seed, experiment_tag("sample_flow"), rng_stream)
    if n_steps == 0:
        return FlowSample(t_grid, np.ones(1), np.zeros((1, d)))
    Ms, Ns = _flow_block(rng, 1, d, t_grid[1:], cfg.dt)
    M = np.concatenate([[1.0], Ms[0]])
    N = np.concatenate([np.zeros((1, d)), Ns[0]])
    return FlowSample(t_grid, M, N)


# -- moments and the semigroup ---------------------------------------------------

def second_moment_reference(d, x, t):
    return (float(np.dot(x, x)) + d) * math.exp(t) - d


def semigroup_apply(w, x, t, cfg, name="semigroup"):
    """MC estimate of P_t w(x) = E w(M(t) x + N(t)); ``w`` maps (n, d) arrays to (n,)."""
    x = np.asarray(x, dtype=float)
    if t == 0:
        v = float(np.asarray(w(x[None]))[0])
        return McEstimate(v, 0.0, cfg.n_paths)
    M, N = flow_at_times(x.size, [t], cfg, name)
    X = M[:, 0, None] * x + N[:, 0]
    return McEstimate.from_samples(w(X))


def second_moment(d, x, t, cfg):
    x = np.asarray(x, dtype=float)
    if x.size != d:
        raise ValueError(f"x must have {d} components")
    return semigroup_apply(lambda X: np.einsum("ij,ij->i", X, X), x, t, cfg, "second_moment")


# -- exit probabilities ----------------------------------------------------------

def exit_probability_reference(d, x_norm, r, R):
    h = radial.scale_h(d, np.array([r, x_norm, R]))
    return float((h[1] - h[0]) / (h[2] - h[0]))


def _bridge_hit(rng, a0, a1, var):
    """Did a Brownian bridge with distances a0, a1 > 0 to a barrier touch it?"""
    return rng.random(a0.size) < np.exp(-2.0 * a0 * a1 / var)


def _exit_block(rng, n, x, r, R, dt, max_steps, bridge):
    d = x.size
    X = np.tile(x, (n, 1))
    rad = np.full(n, np.linalg.norm(x))
    idx = np.arange(n)
    hit_outer = np.zeros(n, dtype=bool)
    done = np.zeros(n, dtype=bool)
    sq = math.sqrt(dt)
    for _ in range(max_steps):
        if idx.size == 0:
            break
        m = idx.size
        e = np.exp(sq * rng.standard_normal(m) - 0.5 * dt)
        X = e[:, None] * X + sq * rng.standard_normal((m, d))
        new = np.linalg.norm(X, axis=1)
        out = new >= R
        inn = new <= r
        if bridge:
            # radial volatility sqrt(1 + rho^2), frozen at the step start
            var = (1.0 + rad * rad) * dt
            live = ~(out | inn)
            out |= live & _bridge_hit(rng, R - rad, R - new, var)
            inn |= live & ~out & _bridge_hit(rng, rad - r, new - r, var)
        stop = out | inn
        if stop.any():
            hit_outer[idx[out]] = True
            done[idx[stop]] = True
            keep = ~stop
            idx, X, new = idx[keep], X[keep], new[keep]
        rad = new
    return hit_outer[done], int(n - done.sum())


def exit_probability(d, x, r, R, cfg, max_time=None, crossing="bridge"):
    """Fraction of paths from x whose radius reaches R before r.

    Paths run until exit; the horizon is open-ended up to ``max_time``
    (default max(100, 100 * t_max)), and paths still inside by then are
    rejected and counted.  ``crossing="bridge"`` also counts barrier
    touches between grid points, using the Brownian-bridge hitting
    probability with the radial volatility frozen over the step;
    ``"discrete"`` only checks the grid and is biased by O(sqrt(dt)).
    """
    if crossing not in ("bridge", "discrete"):
        raise ValueError(f"unknown crossing rule {crossing!r}")
    x = np.asarray(x, dtype=float)
    rho = float(np.linalg.norm(x))
    if not 0 < r < rho < R:
        raise ValueError("need 0 < r < |x| < R")
    max_time = max_time or max(100.0, 100.0 * cfg.t_max)
    max_steps = math.ceil(max_time / cfg.dt)
    bridge = crossing == "bridge"
    parts = run_blocks(cfg, "exit_probability",
                       lambda rng, nb: _exit_block(rng, nb, x, r, R, cfg.dt, max_steps, bridge))
    hits = np.concatenate([p[0] for p in parts]).astype(float)
    rejected = sum(p[1] for p in parts)
    if rejected:
        warnings.warn(f"{rejected} paths did not exit within t={max_time}", McWarning, stacklevel=2)
    return McEstimate.from_samples(hits, rejected)


# -- invariant law ---------------------------------------------------------------

def _a_inf_path_block(rng, n, t_max, dt):
    """Trapezoid approximation of int_0^t_max exp(2B(s) - s) ds, plus M(t_max)."""
    steps = max(1, math.ceil(t_max / dt - 1e-9))
    h = t_max / steps
    sq = math.sqrt(h)
    B = np.zeros(n)
    prev = np.ones(n)
    A = np.zeros(n)
    for k in range(1, steps + 1):
        B += sq * rng.standard_normal(n)
        cur = np.exp(2 * B - k * h)
        A += 0.5 * h * (prev + cur)
        prev = cur
    return A, np.sqrt(prev)


def _warn_tail(M_end, t_max):
    flagged = int(np.sum(M_end > 1e-4))
    if flagged:
        warnings.warn(f"{flagged} paths have M(t_max={t_max}) > 1e-4; truncated tail not negligible",
                      McWarning, stacklevel=3)
    return flagged


def sample_a_inf(cfg, method="closed_form"):
    """Samples of A_inf = int_0^inf exp(2B(s) - s) ds."""
    if method == "closed_form":
        parts = run_blocks(cfg, "a_inf_closed", lambda rng, nb: 1.0 / rng.standard_normal(nb) ** 2)
        return np.concatenate(parts)
    if method == "path_integral":
        parts = run_blocks(cfg, "a_inf_path", lambda rng, nb: _a_inf_path_block(rng, nb, cfg.t_max, cfg.dt))
        _warn_tail(np.concatenate([p[1] for p in parts]), cfg.t_max)
        return np.concatenate([p[0] for p in parts])
    raise ValueError(f"unknown method {method!r}")


def a_inf_tail_reference(x):
    """P(A_inf > x) ~ sqrt(2 / (pi x)), the stable-1/2 tail."""
    return math.sqrt(2.0 / (math.pi * x))


def sample_invariant(d, cfg, method="closed_form"):
    """Samples of X(inf), shape (n_paths, d)."""
    if method == "closed_form":
        def blk(rng, nb):
            zeta = rng.standard_normal(nb)
            return rng.standard_normal((nb, d)) / np.abs(zeta)[:, None]
        return np.concatenate(run_blocks(cfg, "invariant_closed", blk))
    if method == "path_integral":
        parts = run_blocks(cfg, "invariant_path",
                           lambda rng, nb: _flow_block(rng, nb, d, [cfg.t_max], cfg.dt))
        _warn_tail(np.concatenate([p[0][:, 0] for p in parts]), cfg.t_max)
        return np.concatenate([p[1][:, 0] for p in parts])
    raise ValueError(f"unknown method {method!r}")


def running_means(values, ladder):
    """Means of the first n values for each n in ``ladder``, with naive standard errors."""
    values = np.asarray(values, dtype=float)
    out = []
    for n in ladder:
        head = values[:n]
        out.append((int(n), float(head.mean()), float(head.std(ddof=1) / math.sqrt(n))))
    return out


# -- Feynman-Kac radial modes ----------------------------------------------------

def _fk_block(rng, n, d, l, r, times, dt):
    k = 0.5 * l * (l + d - 2)
    X = np.zeros((n, d))
    X[:, 0] = r
    inv_prev = np.full(n, 1.0 / (r * r))
    integral = np.zeros(n)
    out = np.empty((n, len(times)))
    low = 0
    floor = 10 * math.sqrt(dt)
    for j, (steps, h) in enumerate(_substeps(times, dt)):
        sq = math.sqrt(h)
        for _ in range(steps):
            e = np.exp(sq * rng.standard_normal(n) - 0.5 * h)
            X = e[:, None] * X + sq * rng.standard_normal((n, d))
            rad2 = np.einsum("ij,ij->i", X, X)
            low += int(np.count_nonzero(rad2 < floor * floor))
            inv = 1.0 / rad2
            integral += 0.5 * h * (inv_prev + inv)
            inv_prev = inv
        out[:, j] = np.sqrt(np.einsum("ij,ij->i", X, X)) * np.exp(-k * integral)
    return out, low


def feynman_kac_mode(d, l, r, t, cfg):
    """MC estimate of f_l(t, r) = E[R(t) exp(-l(l+d-2)/2 int_0^t R^-2 ds)].

    ``t`` may be a scalar or an increasing sequence; a sequence returns one
    estimate per time from the same paths.
    """
    if l < 1 or r <= 0:
        raise ValueError("need l >= 1 and r > 0")
    scalar = np.ndim(t) == 0
    times = _check_times(t)
    parts = run_blocks(cfg, f"feynman_kac_{d}_{l}",
                       lambda rng, nb: _fk_block(rng, nb, d, l, r, times, cfg.dt))
    vals = np.concatenate([p[0] for p in parts])
    low = sum(p[1] for p in parts)
    if low:
        warnings.warn(f"radius fell below 10*sqrt(dt) on {low} path-steps; discount under-resolved",
                      McWarning, stacklevel=2)
    ests = [McEstimate.from_samples(vals[:, j]) for j in range(len(times))]
    return ests[0] if scalar else ests


def estimate_lambda(d, cfg):
    """MC mean of (r - f_0(r)) at r = |X(inf)| over closed-form invariant samples."""
    X = sample_invariant(d, cfg, "closed_form")
    return McEstimate.from_samples(radial.f0_hat(d, np.linalg.norm(X, axis=1)))


def mean_radius_offset(d, radii, t, cfg):
    """E|X^x(t)| - gamma_d t - f_0(|x|) for each |x| in ``radii``, on one shared flow."""
    M, N = flow_at_times(d, [t], cfg, "mean_radius")
    M, N = M[:, 0], N[:, 0]
    e1 = np.eye(d)[0]
    out = []
    for rho in radii:
        rad = np.linalg.norm(M[:, None] * (rho * e1) + N, axis=1)
        shift = gamma_d(d) * t + float(radial.f_0(d, rho))
        out.append(McEstimate.from_samples(rad - shift))
    return out


# -- convergence of P_t v and the coupling check -----------------------------------

def cone_values(g, X):
    """v(X) = |X| g(X/|X|), with v(0) = 0."""
    X = np.atleast_2d(X)
    rad = np.linalg.norm(X, axis=1)
    out = np.zeros(len(X))
    pos = rad > 0
    out[pos] = rad[pos] * g(X[pos] / rad[pos, None])
    return out


def _gap_quadrature(g, r, n_dirs):
    """Directions and weights (summing to 1) for integrating over the sphere of radius r."""
    d = g.d
    if d == 2:
        ang = 2 * np.pi * (np.arange(n_dirs) + 0.5) / n_dirs
        th = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        return r * th, np.full(n_dirs, 1.0 / n_dirs)
    if not g.is_zonal:
        raise harmonics.BoundaryError("d >= 3 needs zonal data", field="boundary.type")
    t, w = harmonics.zonal_nodes(d, n_dirs)
    axis = np.asarray(g.axis)
    other = np.eye(d)[np.argmin(np.abs(axis))]
    perp = other - (other @ axis) * axis
    perp /= np.linalg.norm(perp)
    th = t[:, None] * axis + np.sqrt(1 - t * t)[:, None] * perp
    return r * th, w


def lemma5_gap(g, u, r, t, cfg, n_dirs=16, lam=0.0):
    """Quadrature of (P_t v(r th) - u(r th) - c t - b)^2 over the sphere, b = lam * mean(g).

    All directions share one set of flow samples.  ``t`` may be a sequence.
    Returns a list of (gap, noise_floor) pairs, or one pair for scalar t;
    noise_floor is the quadrature of the squared standard errors, the
    expected value of the estimate when the true gap is zero.
    """
    scalar = np.ndim(t) == 0
    times = _check_times(t)
    pts, w = _gap_quadrature(g, r, n_dirs)
    target = u(pts)
    mu = harmonics.mean(g)
    b = lam * mu
    need = times > 0
    if need.any():
        M, N = flow_at_times(g.d, times[need], cfg, "lemma5")
    out, col = [], 0
    for j, tj in enumerate(times):
        shift = target + u.c * tj + b
        if tj == 0:
            gap = float(np.dot(w, (cone_values(g, pts) - shift) ** 2))
            out.append((gap, 0.0))
            continue
        mean = np.empty(len(pts))
        var = np.empty(len(pts))
        for k, x in enumerate(pts):
            vals = cone_values(g, M[:, col, None] * x + N[:, col])
            mean[k] = vals.mean()
            var[k] = vals.var(ddof=1) / len(vals)
        col += 1
        out.append((float(np.dot(w, (mean - shift) ** 2)), float(np.dot(w, var))))
    return out[0] if scalar else out


@dataclass(frozen=True)
class CouplingReport:
    violations: int
    n: int
    max_affine_error: float

    def to_dict(self):
        return asdict(self)


COUPLING_RTOL = 1e-12


def convexity_coupling_check(w, x, y, alpha, t, cfg):
    """Count paths with w(X^z) > alpha w(X^x) + (1-alpha) w(X^y), z = alpha x + (1-alpha) y.

    The tolerance is COUPLING_RTOL * (1 + |rhs|).  ``max_affine_error`` is the
    largest |X^z - (alpha X^x + (1-alpha) X^y)| relative to 1 + |X^z|.
    """
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = alpha * x + (1 - alpha) * y
    M, N = flow_at_times(x.size, [t], cfg, "coupling")
    M, N = M[:, 0, None], N[:, 0]
    Xx, Xy, Xz = M * x + N, M * y + N, M * z + N
    blend = alpha * Xx + (1 - alpha) * Xy
    err = np.linalg.norm(Xz - blend, axis=1) / (1 + np.linalg.norm(Xz, axis=1))
    rhs = alpha * w(Xx) + (1 - alpha) * w(Xy)
    bad = w(Xz) > rhs + COUPLING_RTOL * (1 + np.abs(rhs))
    return CouplingReport(int(bad.sum()), len(bad), float(err.max()))
