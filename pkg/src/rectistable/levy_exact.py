"""Closed-form Lévy-measure geometry.

The jumping measure of the x-dependent rectilinear process charges only the
lines ``y + w a_i(y)``, with density ``A_alpha |w|^{-1-alpha}`` on each.  For a
radial target set the pre-image on every line is a union of at most two
intervals bounded by roots of ``|y - z0 + a v| = R``; integrating
``|v|^{-1-alpha}`` over those intervals is exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .geometry import CoefficientField
from .stable_math import StabilityIndex, compute_A_alpha

__all__ = [
    "line_sphere_roots",
    "ring_roots",
    "RingPreimage",
    "ring_preimage",
    "RadialSet",
    "ring",
    "exterior",
    "mu_ring_measure",
    "mu_ring_measure_relaxed",
    "mu_exterior",
    "mu_exterior_lower",
    "ExteriorMeasure",
    "field_lower_constant",
    "nu_radial_set",
    "ring_regime_ok",
]

SET_RING = 0
SET_EXTERIOR = 1


@njit(cache=True, nogil=True)
def _roots(p, a, R):
    """Roots ``v_- <= v_+`` of ``|p + a v| = R`` (NaN when the line misses the sphere)."""
    d = p.shape[0]
    na2 = 0.0
    for k in range(d):
        na2 += a[k] * a[k]
    na = math.sqrt(na2)
    bb = 0.0
    for k in range(d):
        bb += a[k] * p[k]
    bb /= na
    lam2 = 0.0
    pp = 0.0
    for k in range(d):
        e = p[k] - bb * a[k] / na
        lam2 += e * e
        pp += p[k] * p[k]
    lam = math.sqrt(lam2)
    disc = (R - lam) * (R + lam)
    if disc < 0.0:
        return math.nan, math.nan, lam2
    sq = math.sqrt(disc)
    pn = math.sqrt(pp)
    c = (R - pn) * (R + pn)  # R^2 - |p|^2
    if bb >= 0.0:
        vm = (-bb - sq) / na
        den = na * (bb + sq)
        vp = c / den if den != 0.0 else 0.0
    else:
        vp = (sq - bb) / na
        den = na * (sq - bb)
        vm = -c / den if den != 0.0 else 0.0
    return vm, vp, lam2


@njit(cache=True, nogil=True)
def _tail(lo, hi, alpha):
    """``int_lo^hi |v|^{-1-alpha} dv`` for an interval not straddling 0 (inf if it does)."""
    if hi <= lo:
        return 0.0
    if lo < 0.0 < hi or lo == 0.0 or hi == 0.0:
        return math.inf
    if lo > 0.0:
        return (lo ** (-alpha) - (hi ** (-alpha) if hi < math.inf else 0.0)) / alpha
    return ((-hi) ** (-alpha) - ((-lo) ** (-alpha) if lo > -math.inf else 0.0)) / alpha


@njit(cache=True, nogil=True)
def _column_ring(p, a, R, eta, alpha):
    """``int |v|^{-1-alpha}`` over ``{v: R <= |p + a v| <= R + eta}``."""
    om, op, _ = _roots(p, a, R + eta)
    if math.isnan(om):
        return 0.0
    im, ip, _ = _roots(p, a, R)
    if math.isnan(im):
        return _tail(om, op, alpha)
    return _tail(om, im, alpha) + _tail(ip, op, alpha)


@njit(cache=True, nogil=True)
def _column_exterior(p, a, R, alpha):
    """``int |v|^{-1-alpha}`` over ``{v: |p + a v| >= R}``."""
    vm, vp, _ = _roots(p, a, R)
    if math.isnan(vm):
        return math.inf
    return _tail(-math.inf, vm, alpha) + _tail(vp, math.inf, alpha)


@njit(cache=True, nogil=True)
def nu_point(p, A, kind, R, eta, alpha, a_alpha):
    """Jumping-measure mass of a radial set seen from ``p = y - z0`` with matrix ``A``."""
    d = p.shape[0]
    col = np.empty(d)
    tot = 0.0
    for i in range(d):
        for k in range(d):
            col[k] = A[k, i]
        if kind == SET_RING:
            tot += _column_ring(p, col, R, eta, alpha)
        else:
            tot += _column_exterior(p, col, R, alpha)
    return a_alpha * tot


@njit(cache=True)
def _nu_many(P, A, kind, R, eta, alpha, a_alpha, out):
    for n in range(P.shape[0]):
        out[n] = nu_point(P[n], A[n], kind, R, eta, alpha, a_alpha)


def _alpha(alpha) -> float:
    return alpha.alpha if isinstance(alpha, StabilityIndex) else StabilityIndex(alpha).alpha


def line_sphere_roots(p, a, R: float):
    """Roots ``(v_-, v_+)`` of ``|p + a v| = R``; ``(nan, nan)`` if the line misses."""
    p = np.ascontiguousarray(p, dtype=float)
    a = np.ascontiguousarray(a, dtype=float)
    if not np.any(a):
        raise ValueError("direction must be non-zero")
    vm, vp, _ = _roots(p, a, float(R))
    return vm, vp


def ring_roots(y, a, z0, R: float):
    """Roots of ``|y - z0 + a v| = R`` for ``y`` strictly inside the sphere."""
    p = np.asarray(y, dtype=float) - np.asarray(z0, dtype=float)
    if not np.linalg.norm(p) < R:
        raise ValueError("y must lie strictly inside B(z0, R)")
    return line_sphere_roots(p, a, R)


@dataclass(frozen=True)
class RingPreimage:
    """Per-column pre-image intervals of the shell ``R <= |y + A v - z0| <= R + eta``."""

    minus: tuple  # per column (v_-(R + eta), v_-(R))
    plus: tuple  # per column (v_+(R), v_+(R + eta))
    lambda_sq: tuple
    column_norms: tuple


def ring_preimage(y, field: CoefficientField, z0, R: float, eta: float) -> RingPreimage:
    p = np.asarray(y, dtype=float) - np.asarray(z0, dtype=float)
    if not np.linalg.norm(p) < R:
        raise ValueError("y must lie strictly inside B(z0, R)")
    A = field.eval(np.asarray(y, dtype=float))
    minus, plus, lam, norms = [], [], [], []
    for i in range(field.d):
        a = np.ascontiguousarray(A[:, i])
        im, ip, l2 = _roots(p, a, R)
        om, op, _ = _roots(p, a, R + eta)
        minus.append((om, im))
        plus.append((ip, op))
        lam.append(l2)
        norms.append(float(np.linalg.norm(a)))
    return RingPreimage(tuple(minus), tuple(plus), tuple(lam), tuple(norms))


@dataclass(frozen=True)
class RadialSet:
    """Ring ``{R <= |y - z0| <= R + eta}`` or exterior ``{|y - z0| >= R}``."""

    kind: str
    R: float
    eta: float = 0.0
    center: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("ring", "exterior"):
            raise ValueError(f"unsupported radial set {self.kind!r}")
        if not self.R > 0:
            raise ValueError("R must be positive")
        if self.kind == "ring" and not self.eta > 0:
            raise ValueError("ring width must be positive")

    @property
    def code(self) -> int:
        return SET_RING if self.kind == "ring" else SET_EXTERIOR

    def contains_radius(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.kind == "ring":
            return (rho >= self.R) & (rho <= self.R + self.eta)
        return rho >= self.R


def ring(R: float, eta: float, center=None) -> RadialSet:
    return RadialSet("ring", float(R), float(eta), None if center is None else tuple(center))


def exterior(R: float, center=None) -> RadialSet:
    return RadialSet("exterior", float(R), 0.0, None if center is None else tuple(center))


def ring_regime_ok(y, z0, R: float, eta: float, r: float | None = None) -> bool:
    """Hypotheses ``|y - z0| < r`` and ``0 < eta < r < 4R/5`` (some r when ``r`` is None)."""
    dist = float(np.linalg.norm(np.asarray(y, float) - np.asarray(z0, float)))
    if r is None:
        return max(dist, eta) < 0.8 * R and eta > 0
    return dist < r and 0 < eta < r < 0.8 * R


def _nu(y, field, z0, rset: RadialSet, alpha):
    a = _alpha(alpha)
    y = np.ascontiguousarray(y, dtype=float)
    p = y - np.asarray(z0, dtype=float)
    A = field.eval(y)
    return float(nu_point(p, A, rset.code, rset.R, rset.eta, a, compute_A_alpha(a)))


def mu_ring_measure(y, field: CoefficientField, z0, R: float, eta_ring: float, alpha,
                    r: float | None = None) -> float:
    """Exact ``mu({w: R <= |y + A(y) w - z0| <= R + eta})`` inside the lemma's regime."""
    if not ring_regime_ok(y, z0, R, eta_ring, r):
        raise ValueError("ring configuration outside the regime 0 < eta < r < 4R/5, |y - z0| < r; "
                         "use mu_ring_measure_relaxed")
    return _nu(y, field, z0, ring(R, eta_ring), alpha)


def mu_ring_measure_relaxed(y, field: CoefficientField, z0, R: float, eta_ring: float, alpha):
    """Same integral without the regime check; returns ``(value, in_regime)``."""
    return _nu(y, field, z0, ring(R, eta_ring), alpha), ring_regime_ok(y, z0, R, eta_ring)


def mu_exterior(y, field: CoefficientField, z0, R: float, alpha) -> float:
    """Exact ``mu({w: |y + A(y) w - z0| >= R})`` (infinite when ``|y - z0| >= R``)."""
    return _nu(y, field, z0, exterior(R), alpha)


_LOWER_CONST_CACHE: dict = {}


def field_lower_constant(field: CoefficientField, alpha, n_dirs: int = 2048, n_probe: int = 256,
                         seed: int = 0) -> float:
    """``(A_alpha/alpha) 8^-alpha min_{y, |z|=1} sum_i |a_i(y).z|^alpha`` estimated on grids.

    The minimum is taken over a finite set of unit vectors and probe points,
    so the value is an estimate from above of the true infimum.
    """
    a = _alpha(alpha)
    key = (id(field), a, n_dirs, n_probe, seed)
    if key in _LOWER_CONST_CACHE:
        return _LOWER_CONST_CACHE[key]
    d = field.d
    rng = np.random.default_rng(seed)
    if d == 2:
        ang = np.linspace(0.0, np.pi, n_dirs, endpoint=False)
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        dirs = rng.normal(size=(n_dirs, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    ys = np.zeros((1, d)) if field.is_constant else rng.uniform(-3, 3, size=(n_probe, d))
    mats = field.eval_many(ys)
    # proj[n, k, i] = a_i(y_n) . z_k
    proj = np.einsum("nji,kj->nki", mats, dirs)
    m = float((np.abs(proj) ** a).sum(axis=2).min())
    c = compute_A_alpha(a) / a * 8.0 ** (-a) * m
    _LOWER_CONST_CACHE[key] = c
    return c


@dataclass(frozen=True)
class ExteriorMeasure:
    exact: float
    envelope: float
    c: float


def mu_exterior_lower(y, field: CoefficientField, z0, R: float, alpha, x=None) -> ExteriorMeasure:
    """Exact exterior measure at ``y`` and the lower envelope ``c / (R - |x - z0|)^alpha``.

    ``y`` must lie in ``B(x, (R - |x - z0|)/3)``; ``x`` defaults to ``y``.
    """
    a = _alpha(alpha)
    y = np.asarray(y, dtype=float)
    x = y if x is None else np.asarray(x, dtype=float)
    dist = float(np.linalg.norm(x - np.asarray(z0, float)))
    if not dist < R:
        raise ValueError("x must lie inside B(z0, R)")
    rx = (R - dist) / 3.0
    if not np.linalg.norm(y - x) < rx:
        raise ValueError("y must lie in B(x, (R - |x - z0|)/3)")
    exact = mu_exterior(y, field, z0, R, a)
    c = field_lower_constant(field, a)
    return ExteriorMeasure(exact, c / (R - dist) ** a, c)


def nu_radial_set(y, field: CoefficientField, z0, shape: RadialSet, alpha) -> float:
    """``nu(y, U) = mu({v: y + A(y) v in U})`` for a ring or an exterior set."""
    if not isinstance(shape, RadialSet):
        raise ValueError("shape must be a RadialSet (ring or exterior)")
    return _nu(y, field, z0, shape, alpha)


def nu_many(points, field: CoefficientField, z0, shape: RadialSet, alpha) -> np.ndarray:
    a = _alpha(alpha)
    pts = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
    P = pts - np.asarray(z0, dtype=float)
    A = field.eval_many(pts)
    out = np.empty(pts.shape[0])
    _nu_many(np.ascontiguousarray(P), A, shape.code, shape.R, shape.eta, a, compute_A_alpha(a), out)
    return out
