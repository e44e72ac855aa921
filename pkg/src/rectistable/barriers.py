"""Explicit radial functions: lambda, h, the piecewise theta, Theta, the barriers
f_{b,theta} and F_{b,Theta}, the ring indicator g and the comparison density.

Radial functions are represented by *profiles*: functions of the squared
radius ``s = |y - z|^2`` that also know where they fail to be smooth.  The
quadrature engine uses that information to split integration lines.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .geometry import Ball
from .stable_math import StabilityIndex

__all__ = [
    "RadialProfile",
    "PowerProfile",
    "ProductProfile",
    "RingProfile",
    "ConstantProfile",
    "LinearProfile",
    "BarrierParams",
    "PiecewiseTheta",
    "ThetaCap",
    "build_theta",
    "choose_theta_params",
    "default_N",
    "lambda_eval",
    "h_eval",
    "Theta_eval",
    "g_indicator",
    "f_theta_eval",
    "F_Theta_eval",
    "f_b_theta_eval",
    "F_b_Theta_eval",
    "barrier_prefactor",
    "lambda_profile",
    "h_profile",
    "f_theta_profile",
    "F_Theta_profile",
    "f_b_theta_profile",
    "F_b_Theta_profile",
    "ring_profile",
    "phi_comparison",
    "phi_integral",
    "theta_class_audit",
    "AuditReport",
]


# --------------------------------------------------------------------------
# profiles


class RadialProfile:
    """Function of the squared radius.

    Subclasses set ``breaks`` (radii where smoothness fails), ``edges``
    (radius -> exponent ``beta`` of a ``dist**beta`` edge behaviour) and
    ``outer`` (the constant value beyond the largest break).
    """

    breaks: tuple = ()
    edges: dict = {}
    outer: float = 0.0

    def value(self, s):
        raise NotImplementedError

    def diff(self, s0, ds):
        """``F(s0 + ds) - F(s0)``; subclasses override when cancellation matters."""
        return self.value(s0 + ds) - self.value(s0)

    def edge_value(self, rho, dist):
        """``F(rho^2 - dist)`` for small ``dist``, accurate when ``rho`` is an edge radius."""
        return self.value(rho * rho - np.asarray(dist, dtype=float))

    def sym2(self, y, h):
        """``F(y + h) + F(y - h) - 2 F(y)``; subclasses avoid the O(h) cancellation."""
        return self.diff(y, h) + self.diff(y, -h)

    def __call__(self, y, center=None):
        y = np.asarray(y, dtype=float)
        if center is not None:
            y = y - np.asarray(center, dtype=float)
        return self.value(np.sum(y * y, axis=-1))


class ConstantProfile(RadialProfile):
    def __init__(self, c: float):
        self.c = float(c)
        self.breaks = ()
        self.edges = {}
        self.outer = self.c

    def value(self, s):
        return np.full(np.shape(s), self.c)

    def diff(self, s0, ds):
        return np.zeros(np.broadcast(np.asarray(s0), np.asarray(ds)).shape)

    def sym2(self, y, h):
        return np.zeros(np.broadcast(np.asarray(y), np.asarray(h)).shape)


class PowerProfile(RadialProfile):
    """``coef * (r^2 - s)^p`` inside the ball, 0 outside."""

    def __init__(self, r: float, p: float, coef: float = 1.0):
        self.r = float(r)
        self.p = float(p)
        self.coef = float(coef)
        self.breaks = (self.r,)
        self.edges = {self.r: self.p}
        self.outer = 0.0

    def value(self, s):
        c = self.r * self.r - np.asarray(s, dtype=float)
        inside = c > 0
        out = np.zeros(np.shape(c))
        out[inside] = self.coef * c[inside] ** self.p
        return out

    def diff(self, s0, ds):
        s0, ds = np.broadcast_arrays(np.atleast_1d(np.asarray(s0, float)), np.asarray(ds, float))
        c = self.r * self.r - s0
        c1 = c - ds
        both = (c > 0) & (c1 > 0)
        out = self.value(s0 + ds) - self.value(s0)
        cb = c[both]
        out[both] = self.coef * cb**self.p * np.expm1(self.p * np.log1p(-ds[both] / cb))
        return out

    def edge_value(self, rho, dist):
        dist = np.asarray(dist, dtype=float)
        if rho != self.r:
            return self.value(rho * rho - dist)
        out = np.zeros(dist.shape)
        inside = dist > 0
        out[inside] = self.coef * dist[inside] ** self.p
        return out

    def sym2(self, y, h):
        y, h = np.broadcast_arrays(np.atleast_1d(np.asarray(y, float)), np.asarray(h, float))
        c = self.r * self.r - y
        out = self.diff(y, h) + self.diff(y, -h)
        both = (c - np.abs(h) > 0)
        if np.any(both):
            cb, hb = c[both], h[both]
            out[both] = self.coef * cb**self.p * _sym2_power(self.p, hb / cb)
        return out


class ProductProfile(RadialProfile):
    """``power(s) * factor(s)`` with the factor only evaluated inside the ball."""

    def __init__(self, power: PowerProfile, factor):
        self.power = power
        self.factor = factor
        r = power.r
        self.breaks = tuple(sorted(set(power.breaks) | {b for b in factor.breaks if b < r}))
        self.edges = dict(power.edges)
        self.outer = 0.0

    def value(self, s):
        s = np.asarray(s, dtype=float)
        r2 = self.power.r ** 2
        out = np.zeros(s.shape)
        inside = s < r2
        out[inside] = self.power.value(s[inside]) * self.factor.value(s[inside])
        return out

    def diff(self, s0, ds):
        s0, ds = np.broadcast_arrays(np.atleast_1d(np.asarray(s0, float)), np.asarray(ds, float))
        r2 = self.power.r ** 2
        s1 = s0 + ds
        out = self.value(s1) - self.value(s0)
        both = (s0 < r2) & (s1 < r2)
        if np.any(both):
            a, h = s0[both], ds[both]
            p0 = self.power.value(a)
            t0 = self.factor.value(a)
            dp = self.power.diff(a, h)
            dt = self.factor.diff(a, h)
            out[both] = (p0 + dp) * dt + t0 * dp
        return out

    def edge_value(self, rho, dist):
        dist = np.asarray(dist, dtype=float)
        s = rho * rho - dist
        out = np.zeros(dist.shape)
        inside = s < self.power.r ** 2
        out[inside] = self.power.edge_value(rho, dist[inside]) * self.factor.value(s[inside])
        return out

    def sym2(self, y, h):
        # (uv)(y+h) + (uv)(y-h) - 2uv = u D2v + v D2u + d+u d+v + d-u d-v
        y, h = np.broadcast_arrays(np.atleast_1d(np.asarray(y, float)), np.asarray(h, float))
        out = self.diff(y, h) + self.diff(y, -h)
        both = y + np.abs(h) < self.power.r ** 2
        if np.any(both):
            a, k = y[both], h[both]
            u, v = self.power.value(a), self.factor.value(a)
            dpu, dmu = self.power.diff(a, k), self.power.diff(a, -k)
            dpv, dmv = self.factor.diff(a, k), self.factor.diff(a, -k)
            out[both] = (u * self.factor.sym2(a, k) + v * self.power.sym2(a, k)
                         + dpu * dpv + dmu * dmv)
        return out


class RingProfile(RadialProfile):
    """Indicator of the open shell ``inner < |y| < outer_radius``."""

    def __init__(self, inner: float, outer_radius: float):
        if not 0 <= inner < outer_radius:
            raise ValueError("need 0 <= inner < outer radius")
        self.inner = float(inner)
        self.outer_radius = float(outer_radius)
        self.breaks = (self.inner, self.outer_radius)
        self.edges = {}
        self.outer = 0.0

    def value(self, s):
        s = np.asarray(s, dtype=float)
        return ((s > self.inner**2) & (s < self.outer_radius**2)).astype(float)


class LinearProfile(RadialProfile):
    def __init__(self, terms):
        self.terms = [(float(c), p) for c, p in terms]
        br = set()
        edges = {}
        for c, p in self.terms:
            if c == 0:
                continue
            br |= set(p.breaks)
            edges.update(p.edges)
        self.breaks = tuple(sorted(br))
        self.edges = edges
        self.outer = sum(c * p.outer for c, p in self.terms)

    def value(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape)
        for c, p in self.terms:
            if c != 0:
                out = out + c * p.value(s)
        return out

    def diff(self, s0, ds):
        shape = np.broadcast(np.asarray(s0), np.asarray(ds)).shape
        out = np.zeros(shape)
        for c, p in self.terms:
            if c != 0:
                out = out + c * p.diff(s0, ds)
        return out

    def edge_value(self, rho, dist):
        dist = np.asarray(dist, dtype=float)
        out = np.zeros(dist.shape)
        for c, p in self.terms:
            if c != 0:
                out = out + c * p.edge_value(rho, dist)
        return out

    def sym2(self, y, h):
        shape = np.broadcast(np.atleast_1d(np.asarray(y)), np.asarray(h)).shape
        out = np.zeros(shape)
        for c, p in self.terms:
            if c != 0:
                out = out + c * p.sym2(y, h)
        return out


def _sym2_power(p, x):
    """``(1 + x)^p + (1 - x)^p - 2`` for ``|x| < 1`` (even binomial series when small)."""
    x = np.asarray(x, dtype=float)
    out = np.expm1(p * np.log1p(x)) + np.expm1(p * np.log1p(-x))
    small = np.abs(x) < 0.25
    if np.any(small):
        xs2 = x[small] ** 2
        acc = np.zeros(xs2.shape)
        term = np.ones(xs2.shape)
        coef = 1.0
        for j in range(1, 60):
            coef *= (p - j + 1) / j
            if j % 2 == 0:
                term = term * xs2
                acc = acc + coef * term
        out[small] = 2.0 * acc
    return out


def _poly_remainder(coef, y, h):
    """``P(y + h) - P(y) - P'(y) h`` from the Taylor terms of order >= 2."""
    P = np.polynomial.polynomial
    out = np.zeros(np.shape(y))
    fact = 1.0
    for j in range(1, len(coef)):
        fact *= j
        if j >= 2:
            out = out + P.polyval(y, P.polyder(coef, j)) * h**j / fact
    return out


class _C1Pieces:
    """Accurate differences for a C^1 function of ``v`` made of smooth pieces.

    Subclasses provide ``knots`` (piece boundaries), ``_piece(v)``,
    ``_rem_piece(k, a, h) = F(a + h) - F(a) - F'(a) h`` and
    ``_ddiff_piece(k, a, h) = F'(a + h) - F'(a)`` valid inside piece ``k``.
    Across knots the Taylor remainder is chained segment by segment, so no
    O(h) terms are ever subtracted.
    """

    def remainder(self, y, h):
        y, h = np.broadcast_arrays(np.atleast_1d(np.asarray(y, float)), np.asarray(h, float))
        out = np.zeros(y.shape)
        for sgn in (1.0, -1.0):
            m = (h * sgn) > 0
            if not np.any(m):
                continue
            cur = y[m].copy()
            hm = h[m]
            end = y[m] + hm
            left = hm.copy()  # step still to travel, kept exact when no knot is crossed
            acc = np.zeros(cur.shape)
            dF = np.zeros(cur.shape)
            knots = sorted(self.knots, reverse=sgn < 0)
            for T in knots + [None]:
                if T is None:
                    cross = np.ones(cur.shape, dtype=bool)
                    seg = left
                    stop = cur + left
                else:
                    cross = (sgn * (T - cur) > 0) & (sgn * (end - T) > 0)
                    if not np.any(cross):
                        continue
                    stop = np.full(cur.shape, T)
                    seg = np.where(cross, stop - cur, 0.0)
                c0 = cur[cross]
                left = left - np.where(cross, seg, 0.0) if T is not None else left
                seg = seg[cross]
                idx = self._piece(c0 + 0.5 * seg)
                rem = np.zeros(c0.shape)
                dd = np.zeros(c0.shape)
                for k in np.unique(idx):
                    sel = idx == k
                    rem[sel] = self._rem_piece(int(k), c0[sel], seg[sel])
                    dd[sel] = self._ddiff_piece(int(k), c0[sel], seg[sel])
                acc[cross] += rem + dF[cross] * seg
                dF[cross] += dd
                cur[cross] = stop[cross]
            out[m] = acc
        return out

    def diff(self, v0, dv):
        v0, dv = np.broadcast_arrays(np.atleast_1d(np.asarray(v0, float)), np.asarray(dv, float))
        return self.derivative(v0, 1) * dv + self.remainder(v0, dv)

    def sym2(self, v, h):
        return self.remainder(v, h) + self.remainder(v, -h)


# --------------------------------------------------------------------------
# theta and Theta


@dataclass(frozen=True)
class BarrierParams:
    r: float
    eps: float
    eta_ring: float
    N: float
    K1: float
    K2: float
    b: float = 1.0

    def __post_init__(self):
        r, eps, eta = self.r, self.eps, self.eta_ring
        if not r > 0:
            raise ValueError("r must be positive")
        if not (0 < eps <= r / 4 * (1 + 1e-15)):
            raise ValueError("need 0 < eps <= r/4")
        if not (0 < eta <= eps):
            raise ValueError("need 0 < eta_ring <= eps")
        if not self.N >= 4:
            raise ValueError("need N >= 4")
        if not (0 < self.K1 * self.q < r * eps / 8):
            raise ValueError("need 0 < K1 q < r eps / 8")
        if not (0 < self.K2 < r * eps / 8):
            raise ValueError("need 0 < K2 < r eps / 8")
        if self.K1 * self.q + self.K2 > eps / self.N:
            raise ValueError("need K1 q + K2 <= eps / N")
        if not self.b > 0:
            raise ValueError("b must be positive")

    @property
    def q(self) -> float:
        return self.r**2 - (self.r - self.eps) ** 2

    @property
    def K(self) -> float:
        """Radial width of the transition: ``(r - eps + K)^2 = T2``."""
        t0 = (self.r - self.eps) ** 2
        k = self.K1 * self.q + self.K2
        return k / (math.sqrt(t0 + k) + (self.r - self.eps))

    def with_b(self, b: float) -> "BarrierParams":
        return BarrierParams(self.r, self.eps, self.eta_ring, self.N, self.K1, self.K2, b)


def default_N(r: float, eps: float) -> float:
    """Smallest N satisfying the explicit N-condition ``N >= r (r v 1)^2 / eps`` (and N >= 4)."""
    return max(4.0, r * max(r, 1.0) ** 2 / eps)


def _sup_excess(K1, K2, q):
    return (K1 + 2.0 * K1 * K1 / 3.0) / q + K2 * (1.0 + K1) / (2.0 * q * q)


def choose_theta_params(r: float, eps: float, N: float | None = None, alpha=None,
                        eta_ring: float | None = None, b: float = 1.0) -> BarrierParams:
    """Pick ``K1, K2`` by halving from half the range caps until
    ``K1 q + K2 <= eps/N`` and ``sup theta - 1/q <= N^-(4+alpha)``.

    Without ``alpha`` the exponent 6 is used, which is sufficient for every
    alpha in (0, 2).
    """
    if N is None:
        N = default_N(r, eps)
    if N < 4:
        raise ValueError("need N >= 4")
    q = r * r - (r - eps) ** 2
    expo = 6.0 if alpha is None else 4.0 + StabilityIndex(alpha).alpha
    target = N ** (-expo)
    k1q = r * eps / 16.0
    k2 = r * eps / 16.0
    for _ in range(400):
        K1 = k1q / q
        if k1q + k2 <= eps / N and _sup_excess(K1, k2, q) <= target:
            break
        k1q *= 0.5
        k2 *= 0.5
    else:  # pragma: no cover - halving always terminates well before this
        raise RuntimeError("could not satisfy the theta parameter constraints")
    return BarrierParams(r, eps, eps / 2 if eta_ring is None else eta_ring, N, k1q / q, k2, b)


class PiecewiseTheta(_C1Pieces):
    """The four-piece C^2 member of the class G(r, eps).

    Pieces: ``1/(r^2 - v)`` on [0, T0]; a cubic in ``v - T0`` on (T0, T1];
    a quartic in ``v - T1`` on (T1, T2]; the constant ``sup_value`` after T2.
    Polynomial coefficients are stored in shifted-monomial form.
    """

    def __init__(self, params: BarrierParams):
        self.params = params
        r, q, K1, K2 = params.r, params.q, params.K1, params.K2
        self.r = r
        self.q = q
        self.T0 = (r - params.eps) ** 2
        self.T1 = self.T0 + K1 * q
        self.T2 = self.T1 + K2
        th0, d0, dd0 = 1.0 / q, 1.0 / q**2, 2.0 / q**3
        # theta(T0 + u) = sum c1[k] u^k
        self.c1 = np.array([th0, d0, 0.5 * dd0, -1.0 / (3.0 * q**4 * K1)])
        u1 = K1 * q
        th1 = float(np.polynomial.polynomial.polyval(u1, self.c1))
        d1 = float(np.polynomial.polynomial.polyval(u1, np.polynomial.polynomial.polyder(self.c1)))
        self.theta_T1 = th1
        self.dtheta_T1 = d1
        # theta(T1 + u) = th1 + d1 u + d1/(2 K2^3) (-2 K2 u^3 + u^4)
        self.c2 = np.array([th1, d1, 0.0, -d1 / K2**2, d1 / (2.0 * K2**3)])
        self.sup_value = float(np.polynomial.polynomial.polyval(K2, self.c2))
        self.breakpoints = (self.T0, self.T1, self.T2)
        self.knots = self.breakpoints
        self.breaks = tuple(math.sqrt(t) for t in self.breakpoints)
        self.edges = {}
        self.outer = self.sup_value

    # closed forms from the construction
    def closed_form_values(self) -> dict:
        q, K1, K2 = self.q, self.params.K1, self.params.K2
        th1 = (1.0 / q) * (1.0 + K1 + 2.0 * K1**2 / 3.0)
        d1 = (1.0 / q**2) * (1.0 + K1)
        return {
            "theta_T0": 1.0 / q,
            "dtheta_T0": 1.0 / q**2,
            "ddtheta_T0": 2.0 / q**3,
            "theta_T1": th1,
            "dtheta_T1": d1,
            "ddtheta_T1": 0.0,
            "theta_T2": th1 + K2 * d1 / 2.0,
            "dtheta_T2": 0.0,
            "ddtheta_T2": 0.0,
        }

    def _piece(self, v):
        v = np.asarray(v, dtype=float)
        return np.select([v <= self.T0, v <= self.T1, v <= self.T2], [0, 1, 2], 3)

    def derivative(self, v, k: int = 0):
        """k-th derivative (k = 0, 1, 2) on [0, r^2); left-continuous at the breaks."""
        P = np.polynomial.polynomial
        v = np.asarray(v, dtype=float)
        piece = self._piece(v)
        out = np.zeros(v.shape)
        m = piece == 0
        c = self.r**2 - v[m]
        out[m] = math.factorial(k) / c ** (k + 1)
        m = piece == 1
        out[m] = P.polyval(v[m] - self.T0, P.polyder(self.c1, k) if k else self.c1)
        m = piece == 2
        out[m] = P.polyval(v[m] - self.T1, P.polyder(self.c2, k) if k else self.c2)
        m = piece == 3
        out[m] = self.sup_value if k == 0 else 0.0
        return out

    def left_derivative(self, v: float, k: int = 0) -> float:
        """Derivative from the left at a breakpoint, evaluated at the piece's exact local length.

        Computing ``v - T1`` in floating point loses the width ``K2`` when it
        is far below the ulp of ``v``; the local coordinate avoids that.
        """
        P = np.polynomial.polynomial
        if v == self.T1:
            return float(P.polyval(self.params.K1 * self.q, P.polyder(self.c1, k) if k else self.c1))
        if v == self.T2:
            return float(P.polyval(self.params.K2, P.polyder(self.c2, k) if k else self.c2))
        return float(self.derivative(np.array([v]), k)[0])

    def left_rounding_scale(self, v: float, k: int = 0) -> float:
        """Sum of the absolute polynomial terms behind :meth:`left_derivative` (its rounding scale)."""
        P = np.polynomial.polynomial
        if v == self.T1:
            return float(P.polyval(self.params.K1 * self.q, np.abs(P.polyder(self.c1, k) if k else self.c1)))
        if v == self.T2:
            return float(P.polyval(self.params.K2, np.abs(P.polyder(self.c2, k) if k else self.c2)))
        return abs(self.left_derivative(v, k))

    def right_derivative(self, v: float, k: int = 0) -> float:
        """Derivative from the right at a breakpoint (uses the piece starting there)."""
        P = np.polynomial.polynomial
        if v == self.T0:
            return float(P.polyval(0.0, P.polyder(self.c1, k) if k else self.c1))
        if v == self.T1:
            return float(P.polyval(0.0, P.polyder(self.c2, k) if k else self.c2))
        if v == self.T2:
            return self.sup_value if k == 0 else 0.0
        return float(self.derivative(np.array([v]), k)[0])

    def value(self, v):
        return self.derivative(v, 0)

    __call__ = value

    def _rem_piece(self, k, a, h):
        if k == 0:
            c = self.r**2 - a
            return h * h / (c * c * (c - h))
        if k == 3:
            return np.zeros(np.shape(a))
        base, coef = (self.T0, self.c1) if k == 1 else (self.T1, self.c2)
        return _poly_remainder(coef, a - base, h)

    def _ddiff_piece(self, k, a, h):
        if k == 0:
            c = self.r**2 - a
            return h * (2.0 * c - h) / (c * c * (c - h) ** 2)
        if k == 3:
            return np.zeros(np.shape(a))
        base, coef = (self.T0, self.c1) if k == 1 else (self.T1, self.c2)
        return _poly_diff(np.polynomial.polynomial.polyder(coef), a - base, h)

    def pieces_table(self) -> list[dict]:
        rows = [{"piece": 0, "start": 0.0, "end": self.T0, "form": "1/(r^2-v)", "shift": "",
                 "coefficients": ""}]
        rows.append({"piece": 1, "start": self.T0, "end": self.T1, "form": "poly(v-T0)",
                     "shift": self.T0, "coefficients": " ".join(repr(float(c)) for c in self.c1)})
        rows.append({"piece": 2, "start": self.T1, "end": self.T2, "form": "poly(v-T1)",
                     "shift": self.T1, "coefficients": " ".join(repr(float(c)) for c in self.c2)})
        rows.append({"piece": 3, "start": self.T2, "end": self.r**2, "form": "constant",
                     "shift": "", "coefficients": repr(self.sup_value)})
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["piece", "start", "end", "form", "shift", "coefficients"],
                           lineterminator="\n")
        w.writeheader()
        for row in self.pieces_table():
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()


def _poly_diff(coef, y, h):
    """``p(y + h) - p(y)`` without forming the two values separately."""
    out = np.zeros(np.shape(y))
    # (y+h)^k - y^k = h * sum_{j<k} (y+h)^j y^(k-1-j)
    yh = y + h
    for k in range(1, len(coef)):
        acc = np.zeros(np.shape(y))
        for j in range(k):
            acc = acc + yh**j * y ** (k - 1 - j)
        out = out + coef[k] * h * acc
    return out


def build_theta(params: BarrierParams) -> PiecewiseTheta:
    return PiecewiseTheta(params)


class ThetaCap(_C1Pieces):
    """``Theta(v)``: ``1/(r^2 - v)`` up to ``(r - eps)^2``, then damped by ``1 - t^3``.

    With ``t = (v - (r-eps)^2)/q`` the damped branch equals ``(1 + t + t^2)/q``,
    which is the form evaluated here (no 0/0 near ``v = r^2``).
    """

    def __init__(self, r: float, eps: float):
        if not (r > 0 and 0 < eps <= r / 4 * (1 + 1e-15)):
            raise ValueError("need r > 0 and 0 < eps <= r/4")
        self.r = float(r)
        self.eps = float(eps)
        self.q = r * r - (r - eps) ** 2
        self.T0 = (r - eps) ** 2
        self.knots = (self.T0,)
        self.breaks = (r - eps,)
        self.edges = {}
        self.outer = 3.0 / self.q

    def derivative(self, v, k: int = 0):
        v = np.asarray(v, dtype=float)
        out = np.zeros(v.shape)
        inner = v <= self.T0
        c = self.r**2 - v[inner]
        out[inner] = math.factorial(k) / c ** (k + 1)
        t = (v[~inner] - self.T0) / self.q
        q = self.q
        if k == 0:
            out[~inner] = (1.0 + t + t * t) / q
        elif k == 1:
            out[~inner] = (1.0 + 2.0 * t) / q**2
        elif k == 2:
            out[~inner] = 2.0 / q**3
        else:
            raise ValueError("only derivatives up to order 2")
        return out

    def value(self, v):
        return self.derivative(v, 0)

    __call__ = value

    def _piece(self, v):
        return np.where(np.asarray(v) <= self.T0, 0, 1)

    def _rem_piece(self, k, a, h):
        if k == 0:
            c = self.r**2 - a
            return h * h / (c * c * (c - h))
        return h * h / self.q**3

    def _ddiff_piece(self, k, a, h):
        if k == 0:
            c = self.r**2 - a
            return h * (2.0 * c - h) / (c * c * (c - h) ** 2)
        return 2.0 * h / self.q**3


def Theta_eval(v, r: float, eps: float):
    v_arr = np.asarray(v, dtype=float)
    if np.any(v_arr < 0) or np.any(v_arr >= r * r):
        raise ValueError("Theta is defined on [0, r^2)")
    out = ThetaCap(r, eps).value(v_arr)
    return float(out) if np.ndim(v) == 0 else out


# --------------------------------------------------------------------------
# point evaluators


def _alpha(alpha) -> float:
    return StabilityIndex(alpha).alpha if not isinstance(alpha, StabilityIndex) else alpha.alpha


def _scalar_or_array(y, out):
    return float(out) if np.ndim(out) == 0 else out


def lambda_profile(r: float, alpha) -> PowerProfile:
    return PowerProfile(r, _alpha(alpha) / 2.0)


def h_profile(r: float, alpha) -> PowerProfile:
    return PowerProfile(r, _alpha(alpha) / 2.0 - 1.0)


def lambda_eval(y, r: float, alpha):
    """``(r^2 - |y|^2)^{alpha/2}`` inside ``B(0, r)``, 0 outside."""
    return _scalar_or_array(y, lambda_profile(r, alpha)(y))


def h_eval(y, r: float, alpha):
    """``(r^2 - |y|^2)^{alpha/2 - 1}`` inside ``B(0, r)``, 0 outside; rejects ``|y| = r``."""
    y = np.asarray(y, dtype=float)
    s = np.sum(y * y, axis=-1)
    if np.any(s == r * r):
        raise ValueError("h is singular on the sphere |y| = r")
    return _scalar_or_array(y, h_profile(r, alpha).value(s))


def ring_profile(ball: Ball, eps: float, eta_ring: float) -> RingProfile:
    return RingProfile(ball.radius + eps, ball.radius + eps + eta_ring)


def g_indicator(y, ball: Ball, eps: float, eta_ring: float):
    """1 on the open ring ``r + eps < |y - z| < r + eps + eta_ring``, else 0."""
    return _scalar_or_array(y, ring_profile(ball, eps, eta_ring)(y, ball.center))


def barrier_prefactor(params: BarrierParams, alpha) -> float:
    """``b eta r^{1 - alpha/2} / eps^{alpha/2}``."""
    a = _alpha(alpha)
    return params.b * params.eta_ring * params.r ** (1.0 - a / 2.0) / params.eps ** (a / 2.0)


def f_theta_profile(theta: PiecewiseTheta, alpha) -> ProductProfile:
    return ProductProfile(lambda_profile(theta.r, alpha), theta)


def F_Theta_profile(params: BarrierParams, alpha) -> ProductProfile:
    return ProductProfile(lambda_profile(params.r, alpha), ThetaCap(params.r, params.eps))


def f_b_theta_profile(params: BarrierParams, theta: PiecewiseTheta, alpha) -> LinearProfile:
    ring = RingProfile(params.r + params.eps, params.r + params.eps + params.eta_ring)
    return LinearProfile([(barrier_prefactor(params, alpha), f_theta_profile(theta, alpha)), (1.0, ring)])


def F_b_Theta_profile(params: BarrierParams, alpha) -> LinearProfile:
    ring = RingProfile(params.r + params.eps, params.r + params.eps + params.eta_ring)
    return LinearProfile([(barrier_prefactor(params, alpha), F_Theta_profile(params, alpha)), (1.0, ring)])


def _check_ball(params: BarrierParams, ball: Ball):
    if abs(ball.radius - params.r) > 1e-12 * params.r:
        raise ValueError("ball radius and barrier parameters disagree")


def f_theta_eval(x, theta: PiecewiseTheta, alpha, center=None):
    return _scalar_or_array(x, f_theta_profile(theta, alpha)(x, center))


def F_Theta_eval(x, params: BarrierParams, alpha, center=None):
    return _scalar_or_array(x, F_Theta_profile(params, alpha)(x, center))


def f_b_theta_eval(x, params: BarrierParams, theta: PiecewiseTheta, ball: Ball, alpha):
    _check_ball(params, ball)
    return _scalar_or_array(x, f_b_theta_profile(params, theta, alpha)(x, ball.center))


def F_b_Theta_eval(x, params: BarrierParams, ball: Ball, alpha):
    _check_ball(params, ball)
    return _scalar_or_array(x, F_b_Theta_profile(params, alpha)(x, ball.center))


# --------------------------------------------------------------------------
# comparison density


def phi_comparison(x, y, ball: Ball, alpha):
    """Two-sided envelope of the exit-radius density at radius ``y > r``."""
    a = _alpha(alpha)
    r = ball.radius
    delta = float(ball.delta(x))
    if not delta > 0:
        raise ValueError("x must lie in the open ball")
    y = np.asarray(y, dtype=float)
    if np.any(y <= r):
        raise ValueError("the comparison density is evaluated at y > r only")
    out = delta ** (a / 2) * r ** (a / 2) / ((y - r) ** (a / 2) * y ** (a / 2) * (y + delta - r))
    return float(out) if out.ndim == 0 else out


def phi_integral(x, lo: float, hi: float, ball: Ball, alpha) -> float:
    """``int_lo^hi phi(y) dy`` for ``r <= lo < hi <= inf``.

    The ``(y - r)^{-alpha/2}`` edge is integrated with an algebraic weight.
    """
    a = _alpha(alpha)
    r = ball.radius
    delta = float(ball.delta(x))
    if not delta > 0:
        raise ValueError("x must lie in the open ball")
    if lo < r or hi <= lo:
        raise ValueError("need r <= lo < hi")
    pref = delta ** (a / 2) * r ** (a / 2)

    def smooth(y):
        return pref / (y ** (a / 2) * (y + delta - r))

    if math.isinf(hi):
        # substitution y = lo + u/(1-u) is avoided: split at a finite point
        mid = max(2 * lo, lo + 10 * r)
        return phi_integral(x, lo, mid, ball, a) + integrate.quad(
            lambda y: smooth(y) * (y - r) ** (-a / 2), mid, np.inf, epsabs=0, epsrel=1e-12, limit=200
        )[0]
    if lo == r:
        val = integrate.quad(smooth, lo, hi, weight="alg", wvar=(-a / 2, 0.0),
                             epsabs=0, epsrel=1e-12, limit=200)[0]
    else:
        val = integrate.quad(lambda y: smooth(y) * (y - r) ** (-a / 2), lo, hi,
                             epsabs=0, epsrel=1e-12, limit=200)[0]
    return float(val)


# --------------------------------------------------------------------------
# class audit


@dataclass
class AuditReport:
    checks: dict = field(default_factory=dict)
    observed: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": dict(self.checks), "observed": dict(self.observed)}


def audit_grid(theta: PiecewiseTheta, n: int = 10_000) -> np.ndarray:
    """Grid on [0, r^2): uniform part, dense cover of [T0, T2] and log refinement toward r^2."""
    r2 = theta.r**2
    n_uni = n // 2
    n_tr = n // 4
    n_log = n - n_uni - n_tr
    width = theta.T2 - theta.T0
    uni = np.linspace(0.0, r2, n_uni, endpoint=False)
    tr = np.linspace(theta.T0 - width, theta.T2 + width, n_tr)
    gap = np.geomspace(1e-10 * r2, r2 - theta.T2, n_log)
    grid = np.concatenate([uni, tr, r2 - gap, theta.breakpoints])
    grid = grid[(grid >= 0) & (grid < r2)]
    return np.unique(grid)


def theta_class_audit(theta: PiecewiseTheta, params: BarrierParams | None = None,
                      n_grid: int = 10_000) -> AuditReport:
    """Check the four class conditions and the Lemma bounds on a grid."""
    params = params or theta.params
    rep = AuditReport()
    r, q = theta.r, theta.q
    v = audit_grid(theta, n_grid)
    th = theta.derivative(v, 0)
    d1 = theta.derivative(v, 1)
    d2 = theta.derivative(v, 2)

    # (i) inner branch and the flat tail after (r - eps + K)^2
    inner = v <= theta.T0
    rep.checks["i_inner_branch"] = bool(np.allclose(th[inner], 1.0 / (r * r - v[inner]), rtol=1e-12, atol=0))
    K = params.K
    flat = v >= (r - params.eps + K) ** 2 * (1 + 1e-15)
    rep.checks["i_flat_tail"] = bool(np.all(th[flat] == theta.sup_value)) and 0 < K <= params.eps / 4
    rep.observed["K"] = K
    rep.observed["C0"] = theta.sup_value

    # (ii) C^2: left and right derivatives at each break agree
    worst = 0.0
    for t in theta.breakpoints:
        for k in range(3):
            left = theta.left_derivative(t, k)
            right = theta.right_derivative(t, k)
            scale = max(abs(left), abs(right), 1.0 / q ** (k + 1))
            # polynomial cancellation at tiny K1, K2 leaves a few ulps of the term sizes
            noise = 64 * np.finfo(float).eps * theta.left_rounding_scale(t, k)
            worst = max(worst, max(abs(left - right) - noise, 0.0) / scale)
    rep.observed["c2_max_rel_jump"] = worst
    rep.checks["ii_C2"] = worst <= 1e-9

    # (iii), (iv) on the transition pieces in local coordinates: the pieces can be
    # only ~1e4 ulps of v wide, so ``v - T1`` in floating point is too coarse there
    P = np.polynomial.polynomial
    n_loc = max(n_grid // 4, 16)
    loc_d1, loc_d2, loc_vals = [], [], []
    for coef, length in ((theta.c1, params.K1 * q), (theta.c2, params.K2)):
        s = np.linspace(0.0, length, n_loc)
        loc_vals.append(P.polyval(s, coef))
        loc_d1.append(P.polyval(s[1:-1], P.polyder(coef, 1)))
        loc_d2.append(P.polyval(s, P.polyder(coef, 2)))
    vals = np.concatenate(loc_vals)
    rep.checks["iii_increasing"] = bool(np.all(np.concatenate(loc_d1) > 0) and np.all(np.diff(vals) >= 0)
                                        and np.all(d1[(v > 0) & (v <= theta.T0)] > 0))

    # (iv) the maximum of theta'' sits at T0
    d2_T0 = 2.0 / q**3
    outer = (v <= theta.T0) | (v > theta.T2)
    d2_all = np.concatenate([d2[outer], *loc_d2])
    rep.observed["max_theta2"] = float(d2_all.max())
    rep.observed["max_theta2_at_T0"] = bool(abs(theta.derivative(np.array([theta.T0]), 2)[0] - d2_T0) <= 1e-12 * d2_T0)
    rep.checks["iv_max_second_derivative"] = bool(d2_all.max() <= d2_T0 * (1 + 1e-12))

    # bounds
    rep.checks["bound_theta_4_over_q"] = bool(np.all(th <= 4.0 / q))
    rep.checks["bound_dtheta_3_over_q2"] = bool(np.all(d1 <= 3.0 / q**2))
    cap = ThetaCap(r, params.eps)
    Th = cap.derivative(v, 0)
    dTh = cap.derivative(v, 1)
    rep.checks["bound_Theta_4_over_q"] = bool(np.all(Th <= 4.0 / q))
    rep.checks["bound_dTheta_3_over_q2"] = bool(np.all(dTh <= 3.0 / q**2))

    # two-sided comparability with 1/((r^2 - v) v q)
    env = 1.0 / np.maximum(r * r - v, q)
    rep.observed["theta_c1"] = float((th / env).min())
    rep.observed["theta_c2"] = float((th / env).max())
    rep.observed["Theta_c1"] = float((Th / env).min())
    rep.observed["Theta_c2"] = float((Th / env).max())
    rep.checks["comparability_positive"] = rep.observed["theta_c1"] > 0 and rep.observed["Theta_c1"] > 0

    # A.1 inequalities
    rep.observed["K1q_plus_K2"] = params.K1 * q + params.K2
    rep.observed["sup_minus_inv_q"] = theta.sup_value - 1.0 / q
    rep.checks["lemmaA1_K"] = params.K1 * q + params.K2 <= params.eps / params.N
    rep.observed["grid_points"] = int(v.size)
    return rep
