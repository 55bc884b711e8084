"""Boundary data on the sphere and its projection onto spherical harmonics.

Circle (d = 2): full Fourier basis, g_l = a_l cos(l th) + b_l sin(l th).
Higher d: zonal functions of t = <theta, axis>, g_l = c_l P_l(t) with P_l the
Gegenbauer profile normalised to P_l(1) = 1.
All inner products use the sphere measure normalised to total mass one.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_gegenbauer

from .specfun import harmonic_dimension, zonal_polynomial

MAX_DEGREE = 256
FFT_MIN_NODES = 2**16

BUILTINS = {
    "constant": "g = value (default 1)",
    "cos_theta": "d=2: g = cos(theta) = x_1",
    "cos_2theta": "d=2: g = cos(2 theta) = x_1^2 - x_2^2",
    "abs_cos_theta": "d=2: g = |cos(theta)|",
    "axis_coord": "g = <theta, axis>",
    "axis_coord_squared": "d>=3: g = <theta, axis>^2",
}


class BoundaryError(ValueError):
    """Malformed boundary data; ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


def _unit(v, d, name="axis"):
    v = np.asarray(v, dtype=float)
    if v.shape != (d,):
        raise BoundaryError(f"{name} must have {d} components", field=name)
    n = np.linalg.norm(v)
    if n == 0:
        raise BoundaryError(f"{name} must be nonzero", field=name)
    return v / n


def normalize_directions(theta, d):
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if theta.shape[-1] != d:
        raise ValueError(f"directions must have {d} components, got {theta.shape[-1]}")
    norms = np.linalg.norm(theta, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-12):
        raise ValueError("directions must have unit norm")
    return theta


@dataclass(frozen=True)
class BoundarySpec:
    """Boundary data g on S^{d-1}.

    ``form`` is one of ``spectrum``, ``zonal_profile`` or ``builtin``; the
    payload fields used depend on it:

    * spectrum: ``terms`` = tuple of (l, kind, coef), kind in {cos, sin} for
      d = 2 and {zonal} for d >= 3
    * zonal_profile: ``profile_coeffs`` = monomial coefficients in t
    * builtin: ``name`` from :data:`BUILTINS`, ``value`` for ``constant``
    """

    d: int
    form: str
    name: str = None
    value: float = 1.0
    terms: tuple = ()
    profile_coeffs: tuple = ()
    axis: tuple = None
    scale: float = 1.0

    def __post_init__(self):
        if not isinstance(self.d, int) or self.d < 2:
            raise BoundaryError(f"dimension must be an integer >= 2, got {self.d!r}", field="d")
        axis = self.axis
        if axis is None:
            axis = tuple(np.eye(self.d)[0])
        object.__setattr__(self, "axis", tuple(_unit(axis, self.d)))
        if self.form == "builtin":
            if self.name not in BUILTINS:
                raise BoundaryError(f"unknown builtin {self.name!r}", field="name")
            if self.name in ("cos_theta", "cos_2theta", "abs_cos_theta") and self.d != 2:
                raise BoundaryError(f"builtin {self.name} is defined for d=2 only", field="name")
            if self.name == "axis_coord_squared" and self.d < 3:
                raise BoundaryError("axis_coord_squared needs d >= 3", field="name")
        elif self.form == "spectrum":
            terms = []
            for i, term in enumerate(self.terms):
                l, kind, coef = term
                if int(l) != l or l < 0:
                    raise BoundaryError(f"term {i}: degree must be a nonnegative integer", field="terms")
                allowed = ("cos", "sin") if self.d == 2 else ("zonal",)
                if kind not in allowed:
                    raise BoundaryError(f"term {i}: kind {kind!r} not in {allowed}", field="terms")
                if kind == "sin" and l == 0:
                    raise BoundaryError(f"term {i}: sin term needs l >= 1", field="terms")
                terms.append((int(l), kind, float(coef)))
            object.__setattr__(self, "terms", tuple(terms))
        elif self.form == "zonal_profile":
            if len(self.profile_coeffs) == 0:
                raise BoundaryError("zonal profile needs profile_coeffs", field="profile_coeffs")
            object.__setattr__(self, "profile_coeffs", tuple(float(c) for c in self.profile_coeffs))
        else:
            raise BoundaryError(f"unknown boundary form {self.form!r}", field="type")

    # -- constructors --------------------------------------------------------

    @classmethod
    def builtin(cls, name, d, axis=None, value=1.0):
        return cls(d=d, form="builtin", name=name, axis=axis, value=value)

    @classmethod
    def spectrum(cls, d, terms, axis=None):
        return cls(d=d, form="spectrum", terms=tuple(tuple(t) for t in terms), axis=axis)

    @classmethod
    def zonal(cls, d, profile_coeffs, axis=None):
        return cls(d=d, form="zonal_profile", profile_coeffs=tuple(profile_coeffs), axis=axis)

    def scaled(self, factor):
        return _replace(self, scale=self.scale * factor)

    # -- structure -----------------------------------------------------------

    @property
    def is_zonal(self):
        if self.form == "zonal_profile":
            return True
        if self.form == "spectrum":
            return self.d >= 3
        return self.name in ("constant", "axis_coord", "axis_coord_squared")

    @property
    def band(self):
        """Largest degree present, or None when g is not band-limited."""
        if self.form == "spectrum":
            return max((t[0] for t in self.terms), default=0)
        if self.form == "zonal_profile":
            return len(self.profile_coeffs) - 1
        return {"constant": 0, "cos_theta": 1, "cos_2theta": 2, "abs_cos_theta": None,
                "axis_coord": 1, "axis_coord_squared": 2}[self.name]

    def profile(self, t):
        """Zonal profile G(t) with g(theta) = G(<theta, axis>)."""
        t = np.asarray(t, dtype=float)
        if self.form == "zonal_profile":
            out = np.polynomial.polynomial.polyval(t, self.profile_coeffs)
        elif self.form == "spectrum":
            out = np.zeros_like(t)
            for l, kind, coef in self.terms:
                out = out + coef * zonal_polynomial(l, self.d, t)
        elif self.name == "constant":
            out = np.full_like(t, self.value)
        elif self.name == "axis_coord":
            out = t.copy()
        elif self.name == "axis_coord_squared":
            out = t * t
        else:
            raise BoundaryError(f"{self.name} is not zonal in d={self.d}", field="name")
        return self.scale * out

    def __call__(self, theta):
        """Evaluate g at unit vectors ``theta`` of shape (..., d)."""
        theta = np.asarray(theta, dtype=float)
        if self.is_zonal:
            return self.profile(theta @ np.asarray(self.axis))
        # only d = 2 reaches here
        if self.form == "spectrum":
            ang = np.arctan2(theta[..., 1], theta[..., 0])
            out = np.zeros(ang.shape)
            for l, kind, coef in self.terms:
                out = out + coef * (np.cos(l * ang) if kind == "cos" else np.sin(l * ang))
            return self.scale * out
        x1, x2 = theta[..., 0], theta[..., 1]
        out = {"cos_theta": lambda: x1, "cos_2theta": lambda: x1 * x1 - x2 * x2,
               "abs_cos_theta": lambda: np.abs(x1)}[self.name]()
        return self.scale * out

    def sup_norm(self, n=4096):
        """sup |g| from a dense sample (exact for the builtin catalogue)."""
        if self.is_zonal:
            t = np.linspace(-1.0, 1.0, n)
            return float(np.max(np.abs(self.profile(t))))
        ang = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        return float(np.max(np.abs(self(np.stack([np.cos(ang), np.sin(ang)], axis=-1)))))

    def to_dict(self):
        if self.form == "builtin":
            out = {"type": "builtin", "name": self.name, "d": self.d}
            if self.name == "constant":
                out["value"] = self.value
            if self.name in ("axis_coord", "axis_coord_squared"):
                out["axis"] = list(self.axis)
        elif self.form == "spectrum":
            out = {"type": "spectrum", "d": self.d,
                   "terms": [{"l": l, "kind": k, "coef": c} for l, k, c in self.terms]}
            if self.d >= 3:
                out["axis"] = list(self.axis)
        else:
            out = {"type": "zonal", "d": self.d, "axis": list(self.axis),
                   "profile_coeffs": list(self.profile_coeffs)}
        if self.scale != 1.0:
            out["scale"] = self.scale
        return out


def _replace(spec, **changes):
    import dataclasses
    return dataclasses.replace(spec, **changes)


_SPEC_KEYS = {
    "builtin": {"type", "name", "d", "axis", "value", "scale"},
    "spectrum": {"type", "d", "terms", "axis", "scale"},
    "zonal": {"type", "d", "axis", "profile_coeffs", "scale"},
}


def boundary_from_dict(doc, d=None):
    """Build a BoundarySpec from its configuration document (strict keys)."""
    if not isinstance(doc, dict):
        raise BoundaryError("boundary must be a mapping", field="boundary")
    kind = doc.get("type")
    if kind not in _SPEC_KEYS:
        raise BoundaryError(f"boundary.type must be one of {sorted(_SPEC_KEYS)}, got {kind!r}",
                            field="boundary.type")
    extra = set(doc) - _SPEC_KEYS[kind]
    if extra:
        raise BoundaryError(f"unknown boundary field(s) {sorted(extra)}",
                            field="boundary." + sorted(extra)[0])
    dim = doc.get("d", d)
    if dim is None:
        raise BoundaryError("boundary dimension missing", field="boundary.d")
    if d is not None and dim != d:
        raise BoundaryError(f"boundary.d={dim} disagrees with dim={d}", field="boundary.d")
    axis = doc.get("axis")
    scale = float(doc.get("scale", 1.0))
    try:
        if kind == "builtin":
            spec = BoundarySpec.builtin(doc.get("name"), dim, axis=axis, value=float(doc.get("value", 1.0)))
        elif kind == "spectrum":
            terms = []
            for i, t in enumerate(doc.get("terms", [])):
                if not isinstance(t, dict) or set(t) - {"l", "kind", "coef"}:
                    raise BoundaryError(f"boundary.terms[{i}] must have keys l, kind, coef",
                                        field=f"boundary.terms[{i}]")
                terms.append((t["l"], t.get("kind", "cos" if dim == 2 else "zonal"), t["coef"]))
            spec = BoundarySpec.spectrum(dim, terms, axis=axis)
        else:
            spec = BoundarySpec.zonal(dim, doc.get("profile_coeffs", ()), axis=axis)
    except BoundaryError as exc:
        raise BoundaryError(str(exc), field="boundary." + (exc.field or "type")) from None
    return spec.scaled(scale) if scale != 1.0 else spec


# -- spectra --------------------------------------------------------------------

@dataclass(frozen=True)
class HarmonicSpectrum:
    """Per-degree projections of g.

    ``coeffs`` has shape (L+1, 2) holding (cos, sin) coefficients for d = 2,
    and shape (L+1,) holding the zonal coefficients c_l for d >= 3.
    """

    d: int
    coeffs: np.ndarray
    axis: tuple
    sup_norms: np.ndarray = field(repr=False)
    l2_norms: np.ndarray = field(repr=False)

    @property
    def L(self):
        return len(self.coeffs) - 1

    @property
    def mean(self):
        return float(self.coeffs[0, 0] if self.d == 2 else self.coeffs[0])

    def block(self, l, theta):
        """g_l evaluated at directions ``theta`` (..., d)."""
        theta = np.asarray(theta, dtype=float)
        if self.d == 2:
            a, b = self.coeffs[l]
            ang = np.arctan2(theta[..., 1], theta[..., 0])
            return a * np.cos(l * ang) + b * np.sin(l * ang)
        t = np.clip(theta @ np.asarray(self.axis), -1.0, 1.0)
        return self.coeffs[l] * zonal_polynomial(l, self.d, t)

    def zonal_block(self, l, t):
        return self.coeffs[l] * zonal_polynomial(l, self.d, np.asarray(t, dtype=float))

    def truncated(self, L):
        L = min(L, self.L)
        return HarmonicSpectrum(self.d, self.coeffs[: L + 1].copy(), self.axis,
                                self.sup_norms[: L + 1].copy(), self.l2_norms[: L + 1].copy())


def _circle_nodes(n):
    ang = 2 * np.pi * np.arange(n) / n
    return ang, np.stack([np.cos(ang), np.sin(ang)], axis=-1)


def zonal_nodes(d, n):
    """Gauss-Gegenbauer nodes in t for the weight (1-t^2)^{(d-3)/2}, weights summing to 1."""
    t, w = roots_gegenbauer(n, (d - 2) / 2)
    return t, w / w.sum()


def project(g, L):
    """Spectrum of g up to degree L."""
    if L < 0 or L > MAX_DEGREE:
        raise ValueError(f"L must lie in [0, {MAX_DEGREE}]")
    d = g.d
    if d == 2:
        # generous oversampling: for kinked data the trapezoid error is O(n^-2)
        n = max(4 * L + 16, FFT_MIN_NODES)
        _, pts = _circle_nodes(n)
        vals = g(pts)
        spec = np.fft.rfft(vals) / n
        coeffs = np.zeros((L + 1, 2))
        coeffs[0, 0] = spec[0].real
        coeffs[1:, 0] = 2 * spec[1 : L + 1].real
        coeffs[1:, 1] = -2 * spec[1 : L + 1].imag
        sup = np.hypot(coeffs[:, 0], coeffs[:, 1])
        l2 = np.where(np.arange(L + 1) == 0, sup, sup / math.sqrt(2))
        return HarmonicSpectrum(2, coeffs, g.axis, sup, l2)
    if not g.is_zonal:
        raise BoundaryError(f"d={d} supports zonal boundary data only", field="boundary.type")
    t, w = zonal_nodes(d, 2 * L + 16)
    vals = g.profile(t)
    coeffs = np.empty(L + 1)
    l2 = np.empty(L + 1)
    for l in range(L + 1):
        P = zonal_polynomial(l, d, t)
        norm2 = float(np.dot(w, P * P))
        coeffs[l] = float(np.dot(w, vals * P)) / norm2
        l2[l] = abs(coeffs[l]) * math.sqrt(norm2)
    # |P_l| <= P_l(1) = 1 on [-1, 1] for d >= 3
    return HarmonicSpectrum(d, coeffs, g.axis, np.abs(coeffs), l2)


def mean(g):
    """Integral of g against the normalised sphere measure."""
    return project(g, 0).mean


def evaluate_spectrum(s, theta):
    theta = normalize_directions(theta, s.d)
    out = np.zeros(theta.shape[:-1])
    for l in range(s.L + 1):
        out = out + s.block(l, theta)
    return out


def apriori_block_bound(l, d, sup_g):
    """Bound on sup|g_l| from sup|g| alone (used beyond the computed spectrum)."""
    if d == 2:
        return 2.0 * sup_g if l else sup_g
    return sup_g * math.sqrt(harmonic_dimension(l, d))


def eigenrelation_residual(s, l, n_grid=200, h=1e-3):
    """Max residual of Delta_S g_l = -l(l+d-2) g_l on a grid, by central differences."""
    if l > s.L:
        raise ValueError(f"degree {l} not present")
    if s.d == 2:
        ang = np.linspace(0, 2 * np.pi, n_grid, endpoint=False)

        def blk(a):
            return s.block(l, np.stack([np.cos(a), np.sin(a)], axis=-1))

        second = (blk(ang + h) - 2 * blk(ang) + blk(ang - h)) / (h * h)
        return float(np.max(np.abs(second + l * l * blk(ang))))
    t = np.linspace(-1 + 2 * h, 1 - 2 * h, n_grid)
    G = lambda x: s.zonal_block(l, x)
    g0, gp, gm = G(t), G(t + h), G(t - h)
    d1 = (gp - gm) / (2 * h)
    d2 = (gp - 2 * g0 + gm) / (h * h)
    res = (1 - t * t) * d2 - (s.d - 1) * t * d1 + l * (l + s.d - 2) * g0
    return float(np.max(np.abs(res)))
