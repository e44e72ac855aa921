"""Monte Carlo exit problems for ``dX = A(X-) dZ`` from a ball.

Paths follow the Euler scheme ``X_{n+1} = X_n + A(X_n) dt^{1/alpha} S_n`` with
``S_n`` a vector of independent standard symmetric stable variables drawn from
a counter-based stream keyed by (path, step, coordinate).  A path stops at
the first ``n`` with ``|X_{n+1} - z| >= r``; the post-jump position is the exit
position and ``(n + 1) dt`` the exit time.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit
from scipy import stats

from .geometry import Ball, CoefficientField, field_matrix
from .levy_exact import RadialSet, nu_point
from .rng import derive_key, stable_draw
from .stable_math import StabilityIndex, compute_A_alpha

__all__ = [
    "SimulationSpec",
    "ExitEnsemble",
    "CensoringError",
    "RadialHistogram",
    "simulate_exit",
    "simulate_exit_many",
    "estimate_exit_time_mean",
    "default_bin_edges",
    "estimate_exit_density",
    "GreenIntegral",
    "estimate_green_integral",
    "harmonic_eval",
    "nested_harmonic_eval",
    "barrier_sandwich_check",
    "boundary_mass",
    "uniform_exit_probability",
    "wilson_interval",
]

# stream labels, so that different experiments never share random numbers
STREAM_EXIT = 1
STREAM_NESTED = 2


class CensoringError(RuntimeError):
    def __init__(self, message, ensemble=None):
        super().__init__(message)
        self.ensemble = ensemble


@dataclass(frozen=True)
class SimulationSpec:
    time_step: float = 1e-3
    max_steps: int = 200_000
    paths: int = 10_000
    master_seed: int = 20240601
    step_halving_levels: int = 0
    censor_threshold: float = 1e-3
    block_size: int = 4096
    workers: int = 1
    stream: int = 0

    def __post_init__(self):
        if not self.time_step > 0:
            raise ValueError("time_step must be positive")
        if self.paths < 1:
            raise ValueError("need at least one path")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if self.step_halving_levels < 0:
            raise ValueError("step_halving_levels must be >= 0")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if self.block_size < 1 or self.workers < 1:
            raise ValueError("block_size and workers must be positive")

    @property
    def effective_time_step(self) -> float:
        """``time_step / 2^step_halving_levels``, the step the kernel actually uses."""
        return self.time_step / 2**self.step_halving_levels

    @property
    def effective_max_steps(self) -> int:
        return self.max_steps * 2**self.step_halving_levels

    def halved(self, levels: int = 1) -> "SimulationSpec":
        """Same spec with ``time_step / 2^levels`` and a step budget scaled to match."""
        return SimulationSpec(self.time_step / 2**levels, self.max_steps * 2**levels, self.paths,
                              self.master_seed, self.step_halving_levels, self.censor_threshold,
                              self.block_size, self.workers, self.stream)

    def with_paths(self, paths: int) -> "SimulationSpec":
        d = asdict(self)
        d["paths"] = int(paths)
        return SimulationSpec(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@njit(cache=True, nogil=True)
def _simulate_block(alpha, dt, max_steps, starts, first_path, z, r, kind, mat, params, k0, k1,
                    green_kind, green_R, green_eta, a_alpha,
                    out_time, out_radius, out_steps, out_censored, out_pos, out_green):
    n, d = starts.shape
    scale = dt ** (1.0 / alpha)
    x = np.empty(d)
    A = np.empty((d, d))
    S = np.empty(d)
    p = np.empty(d)
    r2 = r * r
    for i in range(n):
        path = first_path + i
        for k in range(d):
            x[k] = starts[i, k]
        green = 0.0
        exited = False
        step = 0
        while step < max_steps:
            field_matrix(kind, mat, params, x, A)
            if green_kind >= 0:
                for k in range(d):
                    p[k] = x[k] - z[k]
                green += nu_point(p, A, green_kind, green_R, green_eta, alpha, a_alpha) * dt
            for k in range(d):
                S[k] = stable_draw(alpha, path, step, k, k0, k1)
            dist2 = 0.0
            for k in range(d):
                inc = 0.0
                for j in range(d):
                    inc += A[k, j] * S[j]
                x[k] += scale * inc
                dz = x[k] - z[k]
                dist2 += dz * dz
            step += 1
            if dist2 >= r2:
                exited = True
                break
        out_steps[i] = step
        out_time[i] = step * dt
        out_censored[i] = not exited
        out_green[i] = green
        out_radius[i] = 0.0
        for k in range(d):
            out_pos[i, k] = x[k]
            out_radius[i] += (x[k] - z[k]) ** 2
        out_radius[i] = math.sqrt(out_radius[i])


@dataclass
class ExitEnsemble:
    """Per-path exit records; censored paths are kept but flagged."""

    start: tuple
    ball: Ball
    field_name: str
    alpha: float
    spec: SimulationSpec
    exit_time: np.ndarray
    exit_radius: np.ndarray
    steps: np.ndarray
    censored: np.ndarray
    exit_position: np.ndarray
    green: np.ndarray | None = None
    green_set: RadialSet | None = None
    starts: np.ndarray | None = None

    @property
    def n_paths(self) -> int:
        return int(self.exit_time.size)

    @property
    def n_censored(self) -> int:
        return int(self.censored.sum())

    @property
    def censored_fraction(self) -> float:
        return self.n_censored / self.n_paths

    @property
    def ok(self) -> np.ndarray:
        return ~self.censored

    def records(self):
        """``(exit_time, exit_radius, steps)`` for every exited path."""
        m = self.ok
        return list(zip(self.exit_time[m].tolist(), self.exit_radius[m].tolist(), self.steps[m].tolist()))

    def manifest(self) -> dict:
        return {
            "start": list(self.start),
            "ball": {"center": list(self.ball.center), "radius": self.ball.radius},
            "field": self.field_name,
            "alpha": self.alpha,
            "spec": self.spec.to_dict(),
            "paths": self.n_paths,
            "censored": self.n_censored,
            "green_set": None if self.green_set is None else asdict(self.green_set),
        }

    def to_csv(self) -> str:
        """Columns: path, exit_time, exit_radius, steps, censored, x_1..x_d[, green]."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.exit_position.shape[1]
        head = ["path", "exit_time", "exit_radius", "steps", "censored"] + [f"x_{k + 1}" for k in range(d)]
        if self.green is not None:
            head.append("green")
        w.writerow(head)
        for i in range(self.n_paths):
            row = [i, repr(float(self.exit_time[i])), repr(float(self.exit_radius[i])), int(self.steps[i]),
                   int(self.censored[i])] + [repr(float(c)) for c in self.exit_position[i]]
            if self.green is not None:
                row.append(repr(float(self.green[i])))
            w.writerow(row)
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.manifest(), indent=2, sort_keys=True)


def _alpha(alpha) -> float:
    return alpha.alpha if isinstance(alpha, StabilityIndex) else StabilityIndex(alpha).alpha


def _run(starts, ball: Ball, field: CoefficientField, alpha: float, spec: SimulationSpec,
         green_set: RadialSet | None, labels: tuple, path_offset: int = 0):
    n, d = starts.shape
    if d != ball.d or d != field.d:
        raise ValueError("dimension mismatch between start points, ball and field")
    k0, k1 = derive_key(spec.master_seed, spec.stream, *labels)
    out_time = np.empty(n)
    out_radius = np.empty(n)
    out_steps = np.empty(n, dtype=np.int64)
    out_cens = np.empty(n, dtype=np.bool_)
    out_pos = np.empty((n, d))
    out_green = np.zeros(n)
    gk = -1 if green_set is None else green_set.code
    gR = 1.0 if green_set is None else green_set.R
    ge = 0.0 if green_set is None else green_set.eta
    z = np.ascontiguousarray(ball.z)
    aA = compute_A_alpha(alpha)

    def block(lo):
        hi = min(lo + spec.block_size, n)
        _simulate_block(alpha, spec.effective_time_step, spec.effective_max_steps, starts[lo:hi],
                        path_offset + lo, z, ball.radius, field.kind, field.matrix, field.params, k0, k1,
                        gk, gR, ge, aA,
                        out_time[lo:hi], out_radius[lo:hi], out_steps[lo:hi], out_cens[lo:hi],
                        out_pos[lo:hi], out_green[lo:hi])

    los = list(range(0, n, spec.block_size))
    if spec.workers > 1:
        with ThreadPoolExecutor(spec.workers) as ex:
            list(ex.map(block, los))
    else:
        for lo in los:
            block(lo)
    return out_time, out_radius, out_steps, out_cens, out_pos, out_green


def _check_censoring(ens: ExitEnsemble, threshold: float):
    if ens.censored_fraction > threshold:
        raise CensoringError(
            f"{ens.n_censored} of {ens.n_paths} paths ({ens.censored_fraction:.3%}) reached max_steps="
            f"{ens.spec.effective_max_steps} (time horizon {ens.spec.max_steps * ens.spec.time_step:g}); "
            f"threshold {threshold:.3%}. Increase max_steps.",
            ens,
        )


def simulate_exit(x0, ball: Ball, field: CoefficientField, alpha, spec: SimulationSpec,
                  green_set: RadialSet | None = None, labels: tuple = (STREAM_EXIT,)) -> ExitEnsemble:
    """Simulate ``spec.paths`` paths from ``x0`` until they leave ``ball``.

    With ``green_set`` each path also accumulates ``sum_n nu(X_n, V) dt`` over
    its pre-exit positions.  Raises :class:`CensoringError` when more than
    ``spec.censor_threshold`` of the paths are still inside after
    ``max_steps`` steps.
    """
    a = _alpha(alpha)
    x0 = np.asarray(x0, dtype=float)
    if not ball.contains(x0):
        raise ValueError("start point must lie in the open ball")
    starts = np.broadcast_to(x0, (spec.paths, ball.d))
    starts = np.ascontiguousarray(starts)
    t, rad, st, cen, pos, gr = _run(starts, ball, field, a, spec, green_set, labels)
    ens = ExitEnsemble(tuple(float(c) for c in x0), ball, field.name, a, spec, t, rad, st, cen, pos,
                       gr if green_set is not None else None, green_set)
    _check_censoring(ens, spec.censor_threshold)
    return ens


def simulate_exit_many(starts, ball: Ball, field: CoefficientField, alpha, spec: SimulationSpec,
                       labels: tuple = (STREAM_NESTED,), path_offset: int = 0) -> ExitEnsemble:
    """One path per row of ``starts`` (used by the nested harmonic check)."""
    a = _alpha(alpha)
    starts = np.ascontiguousarray(np.atleast_2d(starts), dtype=float)
    if not np.all(np.linalg.norm(starts - ball.z, axis=1) < ball.radius):
        raise ValueError("all start points must lie in the open ball")
    t, rad, st, cen, pos, _ = _run(starts, ball, field, a, spec, None, labels, path_offset)
    ens = ExitEnsemble(tuple(float(c) for c in starts[0]), ball, field.name, a, spec.with_paths(len(starts)),
                       t, rad, st, cen, pos, None, None, starts)
    _check_censoring(ens, spec.censor_threshold)
    return ens


def estimate_exit_time_mean(ensemble: ExitEnsemble, level: float = 0.95):
    """Sample mean of the exit time with a normal confidence interval."""
    _check_censoring(ensemble, ensemble.spec.censor_threshold)
    t = ensemble.exit_time[ensemble.ok]
    m = float(t.mean())
    se = float(t.std(ddof=1) / math.sqrt(t.size)) if t.size > 1 else math.inf
    zq = float(stats.norm.ppf(0.5 + level / 2))
    return m, (m - zq * se, m + zq * se)


# --------------------------------------------------------------------------
# radial histogram


def wilson_interval(k, n, level: float = 0.95):
    """Wilson score interval for a binomial proportion (vectorized)."""
    k = np.asarray(k, dtype=float)
    zq = float(stats.norm.ppf(0.5 + level / 2))
    p = k / n
    den = 1 + zq * zq / n
    mid = (p + zq * zq / (2 * n)) / den
    half = zq * np.sqrt(p * (1 - p) / n + zq * zq / (4 * n * n)) / den
    return np.maximum(mid - half, 0.0), np.minimum(mid + half, 1.0)


def default_bin_edges(r: float, n_near: int = 40, near_lo: float = 1e-4, near_hi: float = 0.25,
                      growth: float = 1.25, far: float = 20.0) -> np.ndarray:
    """``r``, then ``n_near`` log-spaced offsets up to ``(1 + near_hi) r``, then ``x growth`` to ``far r``."""
    near = r + r * np.geomspace(near_lo, near_hi, n_near)
    edges = [r] + near.tolist()
    e = edges[-1]
    while e * growth < far * r * (1 - 1e-12):
        e *= growth
        edges.append(e)
    edges.append(far * r)
    return np.array(edges)


@dataclass
class RadialHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    total: int
    overflow: int
    level: float = 0.95

    def __post_init__(self):
        if np.any(np.diff(self.bin_edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if int(self.counts.sum()) + self.overflow != self.total:
            raise ValueError("counts and overflow must add up to the total")

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / self.total

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.total * self.widths)

    def density_ci(self):
        lo, hi = wilson_interval(self.counts, self.total, self.level)
        return lo / self.widths, hi / self.widths

    @property
    def empty_bins(self) -> np.ndarray:
        return np.flatnonzero(self.counts == 0)

    def overflow_probability(self) -> float:
        return self.overflow / self.total

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lo", "hi", "count", "probability", "density", "density_lo", "density_hi"])
        dlo, dhi = self.density_ci()
        for i in range(self.counts.size):
            w.writerow([repr(float(self.bin_edges[i])), repr(float(self.bin_edges[i + 1])), int(self.counts[i]),
                        repr(float(self.probabilities[i])), repr(float(self.density[i])),
                        repr(float(dlo[i])), repr(float(dhi[i]))])
        w.writerow([repr(float(self.bin_edges[-1])), "inf", self.overflow,
                    repr(self.overflow_probability()), "", "", ""])
        return buf.getvalue()


def estimate_exit_density(ensemble: ExitEnsemble, binning=None) -> RadialHistogram:
    """Histogram of exit radii; ``binning`` is an edge array (default :func:`default_bin_edges`)."""
    _check_censoring(ensemble, ensemble.spec.censor_threshold)
    r = ensemble.ball.radius
    edges = default_bin_edges(r) if binning is None else np.asarray(binning, dtype=float)
    if edges[0] != r:
        raise ValueError("the first bin edge must be the ball radius")
    rad = ensemble.exit_radius[ensemble.ok]
    counts, _ = np.histogram(rad, bins=edges)
    # np.histogram closes the last bin on the right; the far edge belongs to the overflow
    at_far = int(np.sum(rad == edges[-1]))
    counts[-1] -= at_far
    overflow = int(np.sum(rad > edges[-1])) + at_far
    return RadialHistogram(edges, counts.astype(np.int64), int(rad.size), overflow)


def boundary_mass(ensemble: ExitEnsemble, kappas) -> np.ndarray:
    """Empirical ``P(r <= |X_tau - z| <= r + kappa)`` for each ``kappa``."""
    rad = ensemble.exit_radius[ensemble.ok]
    r = ensemble.ball.radius
    return np.array([float(np.mean(rad <= r + k)) for k in kappas])


# --------------------------------------------------------------------------
# Lévy system and harmonic functions


@dataclass(frozen=True)
class GreenIntegral:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float

    @property
    def combined_se(self) -> float:
        return math.hypot(self.lhs_se, self.rhs_se)

    @property
    def z_score(self) -> float:
        return (self.lhs - self.rhs) / self.combined_se if self.combined_se > 0 else math.inf

    def agrees(self, n_se: float = 3.0) -> bool:
        return abs(self.lhs - self.rhs) <= n_se * self.combined_se


def estimate_green_integral(x0, ball: Ball, field: CoefficientField, alpha, spec: SimulationSpec,
                            V: RadialSet) -> GreenIntegral:
    """Both sides of ``P(X_tau in V) = E sum_n nu(X_n, V) dt`` for a radial set about the ball centre."""
    if V.kind == "ring" and not V.R > ball.radius or V.kind == "exterior" and not V.R > ball.radius:
        raise ValueError("V must stay at positive distance from the ball")
    ens = simulate_exit(x0, ball, field, alpha, spec, green_set=V)
    m = ens.ok
    hit = V.contains_radius(ens.exit_radius[m]).astype(float)
    g = ens.green[m]
    n = hit.size
    return GreenIntegral(float(hit.mean()), float(hit.std(ddof=1) / math.sqrt(n)),
                         float(g.mean()), float(g.std(ddof=1) / math.sqrt(n)))


def _g_values(g, ens: ExitEnsemble):
    pos = ens.exit_position[ens.ok]
    return np.asarray(g(pos), dtype=float).reshape(-1)


def harmonic_eval(x0, ball: Ball, field: CoefficientField, alpha, spec: SimulationSpec, g):
    """``u(x0) = E g(X_tau)`` for exterior data ``g`` (vectorized on exit positions).

    Returns ``(value, standard_error)``.
    """
    ens = simulate_exit(x0, ball, field, alpha, spec)
    vals = _g_values(g, ens)
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.inf
    return float(vals.mean()), se


def nested_harmonic_eval(x0, ball: Ball, inner: Ball, field: CoefficientField, alpha,
                         spec: SimulationSpec, g, inner_paths: int = 1):
    """Two-stage estimate of ``E u(X_{tau_inner})`` with ``u = E g(X_{tau_ball})``.

    Stage one runs ``spec.paths`` paths until they leave ``inner``; exit points
    outside ``ball`` contribute ``g`` directly, the others start
    ``inner_paths`` fresh paths each, run until they leave ``ball``.
    Returns ``(value, standard_error)`` from the stage-one averages.
    """
    if not np.linalg.norm(inner.z - ball.z) + inner.radius <= ball.radius:
        raise ValueError("inner ball must be contained in the ball")
    first = simulate_exit(x0, inner, field, alpha, spec, labels=(STREAM_NESTED, 0))
    pos = first.exit_position[first.ok]
    inside = np.linalg.norm(pos - ball.z, axis=1) < ball.radius
    est = np.zeros(pos.shape[0])
    out = ~inside
    if np.any(out):
        est[out] = np.asarray(g(pos[out]), dtype=float).reshape(-1)
    if np.any(inside):
        starts = np.repeat(pos[inside], inner_paths, axis=0)
        second = simulate_exit_many(starts, ball, field, alpha, spec, labels=(STREAM_NESTED, 1))
        vals = np.asarray(g(second.exit_position), dtype=float).reshape(-1)
        vals[second.censored] = np.nan
        est[inside] = np.nanmean(vals.reshape(-1, inner_paths), axis=1)
    return float(est.mean()), float(est.std(ddof=1) / math.sqrt(est.size))


def barrier_sandwich_check(x_grid, ball: Ball, field: CoefficientField, alpha, spec: SimulationSpec,
                           params, theta, b1: float, b2: float, n_se: float = 3.0) -> dict:
    """Check ``F_{b2,Theta}(x) - n_se SE <= u(x) <= f_{b1,theta}(x) + n_se SE`` on a grid.

    ``u`` is the probability of exiting into the ring ``(r + eps, r + eps + eta_ring)``.
    """
    from .barriers import F_b_Theta_eval, f_b_theta_eval, g_indicator

    a = _alpha(alpha)
    rows = []

    def g(pos):
        return g_indicator(pos, ball, params.eps, params.eta_ring)

    for i, x in enumerate(np.atleast_2d(np.asarray(x_grid, dtype=float))):
        sp = SimulationSpec(**{**spec.to_dict(), "stream": spec.stream * 1000 + i})
        u, se = harmonic_eval(x, ball, field, a, sp, g)
        upper = float(f_b_theta_eval(x, params.with_b(b1), theta, ball, a))
        lower = float(F_b_Theta_eval(x, params.with_b(b2), ball, a))
        ok = lower - n_se * se <= u <= upper + n_se * se
        rows.append({"x": [float(c) for c in x], "delta": float(ball.delta(x)), "u": u, "se": se,
                     "lower": lower, "upper": upper, "passed": bool(ok),
                     "margin_lower": u + n_se * se - lower, "margin_upper": upper + n_se * se - u})
    return {"b1": b1, "b2": b2, "alpha": a, "field": field.name, "n_se": n_se, "rows": rows,
            "passed": all(r["passed"] for r in rows),
            "violations": [r for r in rows if not r["passed"]]}


def uniform_exit_probability(x_points, ball: Ball, field: CoefficientField, alpha, spec: SimulationSpec):
    """``P^x(X_{tau_{B_x}} not in D)`` with ``B_x = B(x, dist(x, D^c)/3)``, per point."""
    a = _alpha(alpha)
    out = []
    for i, x in enumerate(np.atleast_2d(np.asarray(x_points, dtype=float))):
        rx = float(ball.delta(x)) / 3.0
        bx = Ball(tuple(x), rx)
        sp = SimulationSpec(**{**spec.to_dict(), "stream": spec.stream * 1000 + i})
        ens = simulate_exit(x, bx, field, a, sp)
        pos = ens.exit_position[ens.ok]
        left = np.linalg.norm(pos - ball.z, axis=1) >= ball.radius
        p = float(left.mean())
        out.append({"x": [float(c) for c in x], "p": p,
                    "se": float(math.sqrt(max(p * (1 - p), 1e-300) / left.size))})
    return out


def spec_hash(obj) -> str:
    """Stable short hash of a JSON-serializable object (provenance tag)."""
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]
