"""Fixed quadrature rules shared by the radial and special-function code."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights on the reference interval [-1, 1].

    ``gap`` holds the distance of each node to the nearer endpoint, computed
    without cancellation; tanh-sinh nodes crowd the endpoints and ``1 - x``
    would lose every digit there.
    """

    nodes: np.ndarray
    weights: np.ndarray
    kind: str
    gap: np.ndarray

    def __post_init__(self):
        if self.kind not in ("gauss_legendre", "tanh_sinh"):
            raise ValueError(f"unknown quadrature kind {self.kind!r}")
        if len(self.nodes) < 8:
            raise ValueError("a rule needs at least 8 nodes")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")

    def points(self, a, b):
        """Map nodes to [a, b]; returns (x, w, dist_a, dist_b)."""
        half = 0.5 * (b - a)
        left = self.nodes < 0
        dist_a = np.where(left, self.gap, 2.0 - self.gap) * half
        dist_b = np.where(left, 2.0 - self.gap, self.gap) * half
        x = np.where(left, a + dist_a, b - dist_b)
        return x, self.weights * half, dist_a, dist_b

    def integrate(self, f, a, b):
        x, w, _, _ = self.points(a, b)
        return float(np.dot(w, f(x)))


@lru_cache(maxsize=None)
def gauss_legendre(n=32):
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(x, w, "gauss_legendre", 1.0 - np.abs(x))


@lru_cache(maxsize=None)
def tanh_sinh(level=6, span=4.0):
    """Double-exponential rule with step ``2**-level`` on [-span, span]."""
    h = 2.0 ** -level
    k = np.arange(-int(span / h), int(span / h) + 1) * h
    u = 0.5 * np.pi * np.sinh(k)
    x = np.tanh(u)
    w = h * 0.5 * np.pi * np.cosh(k) / np.cosh(u) ** 2
    gap = 1.0 / (np.exp(np.abs(u)) * np.cosh(u))
    keep = (w > 1e-300) & (gap > 0)
    return QuadratureRule(x[keep], w[keep], "tanh_sinh", gap[keep])


def composite(f, breaks, rule=None):
    """Sum of ``rule`` applied on consecutive panels of ``breaks``."""
    rule = rule or gauss_legendre(32)
    breaks = np.asarray(breaks, dtype=float)
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        total += rule.integrate(f, a, b)
    return total


def adaptive(f, a, b, rtol=1e-13, atol=1e-300, rule=None, max_depth=40):
    """Adaptive bisection with a Gauss-Legendre pair (n vs 2n) as error estimate.

    Returns (value, error_estimate).
    """
    coarse = rule or gauss_legendre(16)
    fine = gauss_legendre(2 * len(coarse.nodes))

    def panel(lo, hi):
        return coarse.integrate(f, lo, hi), fine.integrate(f, lo, hi)

    total, err = 0.0, 0.0
    stack = [(a, b, 0)]
    while stack:
        lo, hi, depth = stack.pop()
        q1, q2 = panel(lo, hi)
        e = abs(q2 - q1)
        if e <= max(atol, rtol * abs(q2)) * (hi - lo) / (b - a) or depth >= max_depth:
            total += q2
            err += e
        else:
            mid = 0.5 * (lo + hi)
            stack.append((mid, hi, depth + 1))
            stack.append((lo, mid, depth + 1))
    return total, err
