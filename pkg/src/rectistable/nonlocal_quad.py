"""Principal-value quadrature for the directional operators ``L_v`` and the full generator.

``L_v f(x) = A_alpha int_0^inf [f(x + t v) + f(x - t v) - 2 f(x)] t^{-1-alpha} dt``.

The symmetric second difference removes the principal-value compensation.
The half line is cut at every ``t`` where ``x + t v`` or ``x - t v`` crosses a
sphere on which ``f`` is not smooth; these crossings come from the same
line/sphere root routine used for the Lévy-measure geometry.  Each piece is
integrated by adaptive Gauss-Kronrod after a substitution that flattens the
endpoint behaviour:

* near ``t = 0`` the integrand is ``O(t^{1-alpha})`` and ``t = b u^{1/(2-alpha)}``
  makes it bounded and smooth;
* at a crossing where ``f`` behaves like ``dist^beta`` (``beta = alpha/2`` for
  lambda, ``alpha/2 - 1`` for h) ``t = e +- L u^p`` with ``p = 2/(1+beta)``
  (``p = 2`` when ``beta >= 0``) removes the blowup, the distance to the
  sphere being expanded exactly in ``L u^p``;
* beyond the last crossing the integrand is the constant ``2 (f_out - f(x))``
  times ``t^{-1-alpha}`` and is integrated in closed form.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .barriers import (
    BarrierParams,
    PiecewiseTheta,
    RadialProfile,
    F_Theta_profile,
    barrier_prefactor,
    f_theta_profile,
)
from .geometry import Ball, CoefficientField
from .gk import QuadratureFailure, adaptive_gk
from .levy_exact import line_sphere_roots
from .stable_math import StabilityIndex, compute_A_alpha

__all__ = [
    "QuadratureSpec",
    "GeneratorValue",
    "QuadratureFailure",
    "pv_directional",
    "scaling_reduce",
    "full_generator",
    "Lg_closed_form",
    "SignAuditReport",
    "sign_audit_super",
    "sign_audit_sub",
    "audit_points",
    "case_region",
]


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and the singularity/tail policy of :func:`pv_directional`.

    ``tail_policy`` is ``"exact"`` (the integrand is constant beyond the last
    support crossing, integrated in closed form) or ``"truncate"`` (integrate
    up to ``cutoff`` and treat ``f`` as 0 beyond, keeping only the exact
    ``-2 f(x)`` tail).  ``inner_radius_policy`` picks the symmetric core
    interval ``[0, t_core]``: ``"first-crossing"`` uses the first sphere
    crossing, ``"fixed"`` uses ``core_radius``.  ``endpoint_exponent``
    overrides the edge exponent ``beta`` read off a profile.
    """

    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    inner_radius_policy: str = "first-crossing"
    core_radius: float | None = None
    tail_policy: str = "exact"
    cutoff: float | None = None
    endpoint_exponent: float | None = None
    max_subdivisions: int = 2000
    support_radius: float | None = None
    extra_breaks: tuple = ()

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.tail_policy not in ("exact", "truncate"):
            raise ValueError("tail_policy must be 'exact' or 'truncate'")
        if self.tail_policy == "truncate" and not (self.cutoff and self.cutoff > 0):
            raise ValueError("truncation needs a positive cutoff W")
        if self.inner_radius_policy not in ("first-crossing", "fixed"):
            raise ValueError("inner_radius_policy must be 'first-crossing' or 'fixed'")
        if self.inner_radius_policy == "fixed" and not (self.core_radius and self.core_radius > 0):
            raise ValueError("fixed core interval needs a positive core_radius")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be positive")


DEFAULT_SPEC = QuadratureSpec()


@dataclass(frozen=True)
class GeneratorValue:
    value: float
    error_estimate: float
    subdivisions_used: int

    def __post_init__(self):
        if not self.error_estimate >= 0:
            raise ValueError("error estimate must be non-negative")

    def __add__(self, other: "GeneratorValue") -> "GeneratorValue":
        return GeneratorValue(self.value + other.value, self.error_estimate + other.error_estimate,
                              self.subdivisions_used + other.subdivisions_used)

    def scaled(self, c: float) -> "GeneratorValue":
        return GeneratorValue(c * self.value, abs(c) * self.error_estimate, self.subdivisions_used)


def _alpha(alpha) -> float:
    return alpha.alpha if isinstance(alpha, StabilityIndex) else StabilityIndex(alpha).alpha


# --------------------------------------------------------------------------
# piece integration


def _crossings(x, v, radii):
    """Positive ``t`` with ``|x + t v|`` or ``|x - t v|`` equal to a radius in ``radii``."""
    out = {}
    xn = float(np.linalg.norm(x))
    for rho in radii:
        wm, wp = line_sphere_roots(x, v, rho)
        if math.isnan(wm):
            continue
        for w in (wm, wp):
            t = abs(w)
            if t > 1e-14 * max(rho, xn, 1e-300):
                out.setdefault(t, rho)
    return out


def _merge(ts, rel=1e-13):
    ts = sorted(ts)
    merged = []
    for t in ts:
        if merged and t - merged[-1] <= rel * t:
            continue
        merged.append(t)
    return merged


def _piece_plan(a, b, left, right):
    """Sub-intervals with their maps.  ``left``/``right`` are None, ``"origin"`` or edge data."""
    if left is not None and right is not None:
        m = 0.5 * (a + b)
        return [(a, m, left, None), (m, b, None, right)]
    return [(a, b, left, right)]


class _ProfileLine:
    """Second difference ``D(t)`` of a radial profile along ``x +- t v``."""

    def __init__(self, F, x, v):
        self.F = F
        self.s0 = float(x @ x)
        self.b = float(x @ v)
        self.vv = float(v @ v)
        self.f0 = float(F.value(np.array([self.s0]))[0])

    def at(self, t):
        t = np.asarray(t, dtype=float)
        q = self.vv * t * t
        # symmetric part in the linear term, exact difference in the quadratic one
        return self.F.sym2(self.s0 + q, 2 * self.b * t) + 2.0 * self.F.diff(self.s0, q)

    def near(self, e, rho, sigma, delta):
        """``D(e + sigma delta)`` where ``e`` is a crossing of the sphere of radius ``rho``.

        On the side that crosses, the distance ``rho^2 - |y|^2`` is expanded
        exactly in ``delta`` so that ``dist^beta`` keeps full relative accuracy.
        """
        delta = np.asarray(delta, dtype=float)
        t = e + sigma * delta
        out = np.zeros(delta.shape)
        for k in (1.0, -1.0):
            se = self.s0 + 2 * k * self.b * e + self.vv * e * e
            if abs(se - rho * rho) <= 1e-9 * rho * rho:
                dist = -(sigma * delta * (2 * k * self.b + 2 * self.vv * e) + self.vv * delta * delta)
                out += self.F.edge_value(rho, dist) - self.f0
            else:
                out += self.F.diff(self.s0, 2 * k * self.b * t + self.vv * t * t)
        return out


class _CallableLine:
    """Direct second difference of a black-box ``f``; it loses O(t) digits near ``t = 0``."""

    # fraction of the first piece replaced by the quadratic model D(t) ~ c t^2
    origin_cut = 1e-3

    def __init__(self, f, x_abs, v):
        self.f = f
        self.x = x_abs
        self.v = v
        self.f0 = float(np.asarray(f(x_abs[None, :])).reshape(-1)[0])

    def at(self, t):
        t = np.asarray(t, dtype=float)
        pp = self.x[None, :] + t[:, None] * self.v[None, :]
        pm = self.x[None, :] - t[:, None] * self.v[None, :]
        return np.asarray(self.f(pp), float) + np.asarray(self.f(pm), float) - 2.0 * self.f0

    def near(self, e, rho, sigma, delta):
        return self.at(e + sigma * np.asarray(delta, dtype=float))


def _integrate_piece(line, a, b, left, right, alpha, spec, tol_share):
    """``int_a^b D(t) t^{-1-alpha} dt`` with the endpoint map chosen from ``left``/``right``.

    ``left``/``right`` are None, ``"origin"`` or an edge ``(beta, rho)``.
    """
    L = b - a
    lo, hi = 0.0, 1.0
    cut = getattr(line, "origin_cut", None)
    if left == "origin" and cut:
        # roundoff in D(t) ~ eps f(x) would dominate t^{-1-alpha} near 0; below
        # t0 use D(t) = D(t0) (t/t0)^2, exact up to O(t0^{4-alpha})
        t0 = cut * b
        d0 = float(line.at(np.array([t0]))[0])
        head = d0 * t0 ** (-alpha) / (2.0 - alpha)
        val, err, n = _integrate_piece(line, t0, b, None, right, alpha, spec, tol_share)
        return head + val, err, n
    if left == "origin":
        p = 1.0 / (2.0 - alpha)

        def fun(u):
            t = b * u**p
            return line.at(t) * t ** (-1.0 - alpha) * (p * b * u ** (p - 1.0))
    elif left is not None or right is not None:
        beta, rho = left if left is not None else right
        e, sigma = (a, 1.0) if left is not None else (b, -1.0)
        # beta >= 0: u^2 keeps both the smooth part and dist^beta regular;
        # beta < 0: u^{2/(1+beta)} turns dist^beta d(dist) into a linear term
        p = 2.0 if beta >= 0 else 2.0 / (1.0 + beta)

        def fun(u):
            delta = L * u**p
            t = e + sigma * delta
            return line.near(e, rho, sigma, delta) * t ** (-1.0 - alpha) * (p * L * u ** (p - 1.0))
    elif a > 0 and b / a > 4.0:
        lr = math.log(b / a)

        def fun(u):
            t = a * np.exp(lr * u)
            return line.at(t) * t ** (-alpha) * lr
    else:
        def fun(t):
            return line.at(t) * t ** (-1.0 - alpha)

        lo, hi = a, b
    return adaptive_gk(fun, lo, hi, abs_tol=tol_share, rel_tol=spec.rel_tol,
                       max_subdivisions=spec.max_subdivisions)


def _integrate_line(line, breaks, edge_of, T, tail, alpha, spec):
    """Sum the pieces ``[0, t1], [t1, t2], ..., [t_{m-1}, T]`` and the closed tail."""
    knots = _merge([0.0] + [t for t in breaks if 0 < t < T] + ([T] if T > 0 else []))
    if spec.inner_radius_policy == "fixed" and spec.core_radius < knots[-1]:
        knots = _merge(knots + [spec.core_radius])
    plan = []
    for a, b in zip(knots[:-1], knots[1:]):
        left = "origin" if a == 0.0 else edge_of(a)
        plan.extend(_piece_plan(a, b, left, edge_of(b)))
    total, err, nsub = tail, 0.0, 0
    scale = abs(tail)
    tol_share = spec.abs_tol / max(len(plan), 1)
    failures = []
    for a, b, left, right in plan:
        try:
            val, e, n = _integrate_piece(line, a, b, left, right, alpha, spec, tol_share)
        except QuadratureFailure as exc:
            # pieces with heavy cancellation can stall at roundoff; judge them
            # against the size of the whole line integral below
            val, e, n = exc.value, exc.error, exc.subdivisions
            failures.append((a, b, e))
        total += val
        err += e
        nsub += n
        scale += abs(val)
    if failures and not err <= max(spec.abs_tol, spec.rel_tol * scale):
        a, b, e = max(failures, key=lambda z: z[2])
        raise QuadratureFailure(
            f"line integral did not converge: error {err:.3g}, worst piece [{a:.6g}, {b:.6g}] "
            f"with error {e:.3g}", total, err, nsub
        )
    return total, err, nsub


# --------------------------------------------------------------------------
# public operators


def pv_directional(f, x, v, alpha, spec: QuadratureSpec | None = None, center=None) -> GeneratorValue:
    """``L_v f(x)``.

    ``f`` is either a :class:`~rectistable.barriers.RadialProfile` (radial about
    ``center``, breaks and edge exponents known) or a vectorized callable on
    arrays of points of shape ``(n, d)``.  For a callable, ``spec`` must give
    ``support_radius`` (support inside ``B(center, R)``, exact tail) or the
    truncation cutoff; ``spec.extra_breaks`` lists further radii where ``f`` is
    not smooth and ``spec.endpoint_exponent`` the edge exponent there.
    """
    spec = spec or DEFAULT_SPEC
    a = _alpha(alpha)
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.shape != v.shape or x.ndim != 1:
        raise ValueError("x and v must be points of the same dimension")
    if not np.any(v):
        raise ValueError("direction v must be non-zero")
    c = np.zeros_like(x) if center is None else np.asarray(center, dtype=float)
    xr = x - c
    A = compute_A_alpha(a)
    if isinstance(f, RadialProfile):
        return _pv_profile(f, xr, v, a, spec).scaled(A)
    return _pv_callable(f, x, xr, v, a, spec).scaled(A)


def _edge_lookup(cross, edges):
    table = [(t, (edges[rho], rho)) for t, rho in cross.items() if rho in edges]

    def edge_of(t):
        for te, info in table:
            if abs(te - t) <= 1e-13 * te:
                return info
        return None

    return edge_of


def _pv_profile(F, x, v, alpha, spec) -> GeneratorValue:
    line = _ProfileLine(F, x, v)
    cross = _crossings(x, v, tuple(F.breaks) + tuple(spec.extra_breaks))
    edges = dict(F.edges)
    if spec.endpoint_exponent is not None:
        edges = {rho: spec.endpoint_exponent for rho in edges}
    edge_of = _edge_lookup(cross, edges)
    ts = _merge(cross)
    if spec.tail_policy == "truncate":
        T = spec.cutoff
        ts = [t for t in ts if t < T]
        tail = -2.0 * line.f0 * T ** (-alpha) / alpha
    else:
        T = ts[-1] if ts else 0.0
        if T == 0.0:
            return GeneratorValue(0.0, 0.0, 0)
        tail = 2.0 * (F.outer - line.f0) * T ** (-alpha) / alpha
    val, err, n = _integrate_line(line, ts, edge_of, T, tail, alpha, spec)
    return GeneratorValue(val, err, n)


def _pv_callable(f, x_abs, x, v, alpha, spec) -> GeneratorValue:
    line = _CallableLine(f, x_abs, v)
    radii = tuple(spec.extra_breaks)
    if spec.tail_policy == "exact":
        if spec.support_radius is None:
            raise ValueError("exact tails need spec.support_radius for a callable f")
        radii = radii + (spec.support_radius,)
    cross = _crossings(x, v, radii)
    ts = _merge(cross)
    if spec.tail_policy == "truncate":
        W = spec.cutoff
        ts = [t for t in ts if t < W]
    else:
        W = ts[-1] if ts else 0.0
        if W == 0.0:
            return GeneratorValue(0.0, 0.0, 0)
    tail = -2.0 * line.f0 * W ** (-alpha) / alpha
    beta = spec.endpoint_exponent
    edge_of = _edge_lookup(cross, {} if beta is None else {rho: beta for rho in radii})
    val, err, n = _integrate_line(line, ts, edge_of, W, tail, alpha, spec)
    return GeneratorValue(val, err, n)


def scaling_reduce(f, x, v, alpha, spec: QuadratureSpec | None = None, center=None) -> GeneratorValue:
    """``L_v f(x)`` computed as ``|v|^alpha L_{v/|v|} f(x)``."""
    v = np.asarray(v, dtype=float)
    nv = float(np.linalg.norm(v))
    if nv == 0:
        raise ValueError("direction v must be non-zero")
    a = _alpha(alpha)
    return pv_directional(f, x, v / nv, a, spec, center).scaled(nv**a)


def full_generator(f, x, field: CoefficientField, alpha, spec: QuadratureSpec | None = None,
                   center=None) -> GeneratorValue:
    """``L f(x) = sum_i L_{a_i(x)} f(x)`` with ``a_i(x)`` the columns of ``A(x)``."""
    x = np.asarray(x, dtype=float)
    A = field.eval(x)
    out = GeneratorValue(0.0, 0.0, 0)
    for i in range(field.d):
        out = out + pv_directional(f, x, A[:, i], alpha, spec, center)
    return out


def Lg_closed_form(x, ball: Ball, eps: float, eta_ring: float, alpha) -> float:
    """``L_{e_d} g(x)`` for the ring indicator ``g`` of ``(r + eps, r + eps + eta_ring)``."""
    a = _alpha(alpha)
    xr = np.asarray(x, dtype=float) - ball.z
    if not np.linalg.norm(xr) < ball.radius:
        raise ValueError("x must lie in the open ball")
    r = ball.radius
    xt2 = float(xr[:-1] @ xr[:-1])
    xd = abs(float(xr[-1]))
    S3 = math.sqrt((r + eps) ** 2 - xt2)
    S4 = math.sqrt((r + eps + eta_ring) ** 2 - xt2)
    A = compute_A_alpha(a)
    return A / a * ((S3 - xd) ** -a - (S4 - xd) ** -a + (S3 + xd) ** -a - (S4 + xd) ** -a)


# --------------------------------------------------------------------------
# sign audits

LADDER = tuple(range(-20, 21))


def case_region(norm_x: float, params: BarrierParams) -> int:
    """1: ``|x| < r - eps``; 2: ``[r - eps, r - eps + eps/N]``; 3: beyond, up to ``r``."""
    r, eps, N = params.r, params.eps, params.N
    if norm_x < r - eps:
        return 1
    if norm_x <= r - eps + eps / N:
        return 2
    return 3


def audit_points(params: BarrierParams, d: int = 2, n: int = 200, margin: float | None = None) -> np.ndarray:
    """Grid of ``~n`` points in the half plane ``{x_d >= 0}`` spanned by ``e_1, e_d``.

    Radii cover the three case regions (half in the inner ball, a quarter in
    the thin shell ``[r - eps, r - eps + eps/N]``, a quarter log-refined
    toward ``r - margin``); angles are measured from ``e_d``.
    """
    r, eps, N = params.r, params.eps, params.N
    margin = 1e-3 * r if margin is None else margin
    if not 0 < margin < eps / 2:
        raise ValueError("margin must lie in (0, eps/2)")
    n_ang = max(2, int(round(math.sqrt(n / 2))))
    n_rad = max(3, -(-n // n_ang))
    n1 = n_rad // 2
    n2 = (n_rad - n1) // 2
    n3 = n_rad - n1 - n2
    r1 = np.linspace(0.0, r - eps, n1, endpoint=False)
    r2 = np.linspace(r - eps, r - eps + eps / N, n2 + 1)[: max(n2, 1)] if n2 else np.empty(0)
    start = r - eps + eps / N
    gap = np.geomspace(r - start, margin, n3 + 1)[1:]
    r3 = r - gap
    radii = np.concatenate([r1, r2, r3])
    angles = np.linspace(0.0, math.pi / 2, n_ang)
    pts = []
    for rho in radii:
        for ang in angles:
            p = np.zeros(d)
            p[0] = rho * math.sin(ang)
            p[-1] = rho * math.cos(ang)
            pts.append(p)
            if rho == 0.0:
                break
    return np.array(pts)


@dataclass
class SignAuditReport:
    kind: str
    alpha: float
    r: float
    eps: float
    eta_ring: float
    N: float
    tolerance: float
    b: float | None
    ladder_exponent: int | None
    points: list = field(default_factory=list)
    region_counts: dict = field(default_factory=dict)
    region_worst_margin: dict = field(default_factory=dict)

    @property
    def found(self) -> bool:
        return self.b is not None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["found"] = self.found
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["x", "region", "L_f", "L_f_error", "L_g", "value", "margin"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for p in self.points:
            w.writerow([" ".join(repr(float(c)) for c in p["x"]), p["region"], repr(p["L_f"]),
                        repr(p["L_f_error"]), repr(p["L_g"]), repr(p["value"]), repr(p["margin"])])
        return buf.getvalue()


def _audit_values(profile, pts, ball, params, a, spec, workers):
    ed = np.zeros(ball.d)
    ed[-1] = 1.0

    def one(p):
        gv = pv_directional(profile, p + ball.z, ed, a, spec, center=ball.z)
        lg = Lg_closed_form(p + ball.z, ball, params.eps, params.eta_ring, a)
        return gv.value, gv.error_estimate, lg

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            res = list(ex.map(one, pts))
    else:
        res = [one(p) for p in pts]
    return np.array(res)


def _sign_audit(kind, profile, params, ball, a, pts, tol, spec, workers) -> SignAuditReport:
    if abs(ball.radius - params.r) > 1e-12 * params.r:
        raise ValueError("ball radius and barrier parameters disagree")
    vals = _audit_values(profile, pts, ball, params, a, spec, workers)
    Lf, Lf_err, Lg = vals[:, 0], vals[:, 1], vals[:, 2]
    unit = barrier_prefactor(params.with_b(1.0), a)
    sign = 1.0 if kind == "super" else -1.0

    def ok(k):
        pref = unit * 2.0**k
        total = pref * Lf + Lg
        slack = tol * (pref * np.abs(Lf) + np.abs(Lg)) + pref * Lf_err
        return np.all(sign * total <= slack), total, slack

    ks = LADDER if kind == "super" else LADDER[::-1]
    chosen = None
    for k in ks:
        if ok(k)[0]:
            chosen = k
            break
    rep = SignAuditReport(kind, a, params.r, params.eps, params.eta_ring, params.N, tol,
                          None if chosen is None else 2.0**chosen, chosen)
    k_eval = chosen if chosen is not None else (LADDER[-1] if kind == "super" else LADDER[0])
    _, total, slack = ok(k_eval)
    margins = -sign * total
    for p, lf, le, lg, tot, m in zip(pts, Lf, Lf_err, Lg, total, margins):
        reg = case_region(float(np.linalg.norm(p)), params)
        rep.points.append({"x": [float(c) for c in p], "region": reg, "L_f": float(lf),
                           "L_f_error": float(le), "L_g": float(lg), "value": float(tot),
                           "margin": float(m)})
        rep.region_counts[reg] = rep.region_counts.get(reg, 0) + 1
        rep.region_worst_margin[reg] = min(rep.region_worst_margin.get(reg, math.inf), float(m))
    return rep


def sign_audit_super(theta: PiecewiseTheta, params: BarrierParams, ball: Ball, alpha, grid=None,
                     tolerance: float = 1e-9, spec: QuadratureSpec | None = None,
                     workers: int | None = None) -> SignAuditReport:
    """Smallest ``b = 2^k`` with ``L_{e_d} f_{b,theta} <= 0`` (up to ``tolerance``) on the grid.

    ``grid`` is an array of points relative to the ball centre, or an integer
    point count for :func:`audit_points`.
    """
    a = _alpha(alpha)
    pts = audit_points(params, ball.d, 200 if grid is None else grid) if grid is None or np.isscalar(grid) \
        else np.asarray(grid, dtype=float)
    return _sign_audit("super", f_theta_profile(theta, a), params, ball, a, pts, tolerance, spec, workers)


def sign_audit_sub(params: BarrierParams, ball: Ball, alpha, grid=None, tolerance: float = 1e-9,
                   spec: QuadratureSpec | None = None, workers: int | None = None) -> SignAuditReport:
    """Largest ``b = 2^k`` with ``L_{e_d} F_{b,Theta} >= 0`` (up to ``tolerance``) on the grid."""
    a = _alpha(alpha)
    pts = audit_points(params, ball.d, 200 if grid is None else grid) if grid is None or np.isscalar(grid) \
        else np.asarray(grid, dtype=float)
    return _sign_audit("sub", F_Theta_profile(params, a), params, ball, a, pts, tolerance, spec, workers)
