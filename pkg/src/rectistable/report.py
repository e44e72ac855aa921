"""Experiment configuration, the exit-density ratio verdict and the audit bundle."""
from __future__ import annotations

import configparser
import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .barriers import (
    build_theta,
    choose_theta_params,
    h_profile,
    lambda_profile,
    phi_integral,
    theta_class_audit,
)
from .exit_mc import (
    SimulationSpec,
    default_bin_edges,
    estimate_exit_density,
    estimate_exit_time_mean,
    simulate_exit,
    spec_hash,
    uniform_exit_probability,
)
from .geometry import Ball, diagonal_field, field_by_name
from .levy_exact import field_lower_constant, mu_exterior_lower, mu_ring_measure, ring_preimage
from .nonlocal_quad import QuadratureSpec, pv_directional, sign_audit_sub, sign_audit_super
from .stable_math import StabilityIndex, compute_A_tilde_alpha

__all__ = [
    "ExperimentConfig",
    "load_config",
    "RatioReport",
    "ratio_report",
    "verdict",
    "DensityVerdict",
    "run_density_verdict",
    "run_small_ring_check",
    "run_lemma_audits",
    "provenance",
]


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment settings; lengths are absolute, fractions are of ``r``."""

    alpha: float = 1.0
    dimension: int = 2
    ball_center: tuple = (0.0, 0.0)
    ball_radius_length: float = 1.0
    fields: tuple = ("identity", "diagonal")
    field_diag: tuple | None = None
    start_delta_fraction_of_r: tuple = (1.0, 0.1, 0.02)
    eps_length: float | None = None
    eta_ring_length: float | None = None
    N: float | None = None
    time_step_time: float = 1e-3
    max_steps: int = 1_000_000
    paths: int = 100_000
    seed: int = 20240601
    step_halving_levels: int = 0
    censor_threshold_fraction: float = 1e-3
    block_size: int = 4096
    workers: int = 1
    quad_abs_tol: float = 1e-12
    quad_rel_tol: float = 1e-10
    bins_near_count: int = 40
    bins_near_lo_fraction_of_r: float = 1e-4
    bins_near_hi_fraction_of_r: float = 0.25
    bins_growth_ratio: float = 1.25
    bins_far_fraction_of_r: float = 20.0
    spread_bound_ratio: float = 25.0
    cross_field_factor: float = 2.0
    audit_grid_points: int = 60
    audit_paths: int = 20_000
    out_dir: str = "out"

    def __post_init__(self):
        StabilityIndex(self.alpha)
        if self.dimension < 2 or len(self.ball_center) != self.dimension:
            raise ValueError("ball_center must have `dimension` >= 2 coordinates")
        if not self.ball_radius_length > 0:
            raise ValueError("ball_radius_length must be positive")
        r = self.ball_radius_length
        if not (0 < self.eps <= r / 4 * (1 + 1e-15)):
            raise ValueError("need 0 < eps_length <= r/4")
        if not (0 < self.eta_ring <= self.eps):
            raise ValueError("need 0 < eta_ring_length <= eps_length")
        if self.N is not None and self.N < 4:
            raise ValueError("need N >= 4")
        if any(not 0 < f <= 1 for f in self.start_delta_fraction_of_r):
            raise ValueError("start distances to the sphere must lie in (0, r]")
        for name in self.fields:
            self.field(name)
        SimulationSpec(self.time_step_time, self.max_steps, self.paths, self.seed, self.step_halving_levels,
                       self.censor_threshold_fraction, self.block_size, self.workers)
        QuadratureSpec(self.quad_abs_tol, self.quad_rel_tol)
        default_bin_edges(r, self.bins_near_count, self.bins_near_lo_fraction_of_r,
                          self.bins_near_hi_fraction_of_r, self.bins_growth_ratio, self.bins_far_fraction_of_r)
        if not self.spread_bound_ratio >= 1:
            raise ValueError("spread bound must be >= 1")

    @property
    def eps(self) -> float:
        return self.ball_radius_length / 4 if self.eps_length is None else self.eps_length

    @property
    def eta_ring(self) -> float:
        return self.eps / 2 if self.eta_ring_length is None else self.eta_ring_length

    @property
    def ball(self) -> Ball:
        return Ball(tuple(self.ball_center), self.ball_radius_length)

    def field(self, name: str):
        if name == "diagonal" and self.field_diag is not None:
            return diagonal_field(self.field_diag)
        return field_by_name(name, self.dimension)

    def start_points(self) -> np.ndarray:
        """Points ``z + (r - delta) e_d`` for each configured ``delta``."""
        r = self.ball_radius_length
        pts = []
        for f in self.start_delta_fraction_of_r:
            p = np.array(self.ball_center, dtype=float)
            p[-1] += r - f * r
            pts.append(p)
        return np.array(pts)

    def simulation(self, stream: int = 0, paths: int | None = None) -> SimulationSpec:
        return SimulationSpec(self.time_step_time, self.max_steps, self.paths if paths is None else paths,
                              self.seed, self.step_halving_levels, self.censor_threshold_fraction,
                              self.block_size, self.workers, stream)

    def quadrature(self) -> QuadratureSpec:
        return QuadratureSpec(self.quad_abs_tol, self.quad_rel_tol)

    def bin_edges(self) -> np.ndarray:
        r = self.ball_radius_length
        return default_bin_edges(r, self.bins_near_count, self.bins_near_lo_fraction_of_r,
                                 self.bins_near_hi_fraction_of_r, self.bins_growth_ratio,
                                 self.bins_far_fraction_of_r)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "alpha" in kw:
            kw["alpha"] = float(kw["alpha"])
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eps_resolved"] = self.eps
        d["eta_ring_resolved"] = self.eta_ring
        return d


_TUPLE_KEYS = {"ball_center", "start_delta_fraction_of_r", "field_diag"}
_STR_TUPLE_KEYS = {"fields"}


def load_config(path: str | None = None, text: str | None = None) -> ExperimentConfig:
    """Read ``key = value`` lines (an optional ``[experiment]`` header is allowed).

    Lists are comma or blank separated.  Unknown keys are rejected.
    """
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    if text is None:
        return ExperimentConfig()
    if not text.lstrip().startswith("["):
        text = "[experiment]\n" + text
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    cp.read_string(text)
    if not cp.has_section("experiment"):
        raise ValueError("configuration needs an [experiment] section")
    known = {f.name: f for f in ExperimentConfig.__dataclass_fields__.values()}
    base = ExperimentConfig()
    kw = {}
    for key, raw in cp.items("experiment"):
        if key not in known:
            raise ValueError(f"unknown configuration key {key!r}")
        if key in _STR_TUPLE_KEYS:
            kw[key] = tuple(t for t in raw.replace(",", " ").split())
        elif key in _TUPLE_KEYS:
            kw[key] = tuple(_floats(raw))
        elif key == "out_dir":
            kw[key] = raw.strip()
        else:
            default = getattr(base, key)
            if isinstance(default, int) and not isinstance(default, bool):
                kw[key] = int(float(raw))
            else:
                kw[key] = float(raw)
    if "dimension" in kw and "ball_center" not in kw:
        kw["ball_center"] = (0.0,) * kw["dimension"]
    return ExperimentConfig(**kw)


def provenance(config: ExperimentConfig) -> dict:
    import numba
    import scipy

    content = {k: v for k, v in config.to_dict().items() if k != "out_dir"}  # where results go is not content
    return {
        "seed": config.seed,
        "spec_hash": spec_hash(content),
        "versions": {"rectistable": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "numba": numba.__version__},
    }


# --------------------------------------------------------------------------
# ratio report


@dataclass
class RatioReport:
    """Per-bin empirical exit density against the comparison density."""

    label: str
    field: str
    start: list
    delta: float
    alpha: float
    paths: int
    rows: list = field(default_factory=list)
    overflow_probability: float = 0.0
    meta: dict = field(default_factory=dict)

    COLUMNS = ("lo", "hi", "count", "density", "density_lo", "density_hi", "phi_avg", "ratio",
               "ratio_lo", "ratio_hi")

    def nonempty(self) -> list:
        return [r for r in self.rows if r["count"] > 0]

    @property
    def min_ratio(self) -> float:
        ne = self.nonempty()
        return min(r["ratio"] for r in ne) if ne else math.nan

    @property
    def max_ratio(self) -> float:
        ne = self.nonempty()
        return max(r["ratio"] for r in ne) if ne else math.nan

    @property
    def spread(self) -> float:
        lo = self.min_ratio
        return self.max_ratio / lo if lo > 0 else math.inf

    def summary(self) -> dict:
        return {"label": self.label, "field": self.field, "delta": self.delta,
                "min_ratio": self.min_ratio, "max_ratio": self.max_ratio, "spread": self.spread,
                "nonempty_bins": len(self.nonempty()), "bins": len(self.rows),
                "overflow_probability": self.overflow_probability}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow([r["count"] if c == "count" else repr(float(r[c])) for c in self.COLUMNS])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, label: str = "", **kw) -> "RatioReport":
        rows = []
        for rec in csv.DictReader(io.StringIO(text)):
            rows.append({c: (int(rec[c]) if c == "count" else float(rec[c])) for c in cls.COLUMNS})
        return cls(label, kw.get("field", ""), kw.get("start", []), kw.get("delta", math.nan),
                   kw.get("alpha", math.nan), kw.get("paths", 0), rows)

    def to_dict(self) -> dict:
        return {**self.summary(), "start": self.start, "alpha": self.alpha, "paths": self.paths,
                "rows": self.rows, "meta": self.meta}


def ratio_report(ensemble, edges, label: str = "") -> RatioReport:
    """Bin the exit radii and divide by the bin averages of the comparison density."""
    hist = estimate_exit_density(ensemble, edges)
    ball = ensemble.ball
    x = np.asarray(ensemble.start)
    dlo, dhi = hist.density_ci()
    rows = []
    for i in range(hist.counts.size):
        lo, hi = float(hist.bin_edges[i]), float(hist.bin_edges[i + 1])
        phi_avg = phi_integral(x, lo, hi, ball, ensemble.alpha) / (hi - lo)
        dens = float(hist.density[i])
        rows.append({"lo": lo, "hi": hi, "count": int(hist.counts[i]), "density": dens,
                     "density_lo": float(dlo[i]), "density_hi": float(dhi[i]), "phi_avg": phi_avg,
                     "ratio": dens / phi_avg, "ratio_lo": float(dlo[i]) / phi_avg,
                     "ratio_hi": float(dhi[i]) / phi_avg})
    return RatioReport(label, ensemble.field_name, list(ensemble.start), float(ball.delta(x)),
                       ensemble.alpha, ensemble.n_paths, rows, hist.overflow_probability())


def verdict(reports, spread_bound: float = 25.0, cross_field_factor: float = 2.0) -> dict:
    """PASS/FAIL from ratio reports alone (so saved CSVs reproduce it).

    Each report must have positive ratios with confidence intervals inside
    ``(0, inf)`` on its non-empty bins and spread at most ``spread_bound``.
    Reports sharing a start distance but differing in the field must have
    spreads within ``cross_field_factor`` of each other.
    """
    per = []
    for rep in reports:
        ne = rep.nonempty()
        ok_pos = all(r["ratio"] > 0 and r["ratio_lo"] > 0 and math.isfinite(r["ratio_hi"]) for r in ne)
        per.append({"label": rep.label, "field": rep.field, "delta": rep.delta, "spread": rep.spread,
                    "positive": bool(ok_pos and len(ne) > 0),
                    "spread_ok": bool(rep.spread <= spread_bound)})
    cross = []
    deltas = sorted({round(p["delta"], 12) for p in per})
    for dl in deltas:
        sp = [p["spread"] for p in per if round(p["delta"], 12) == dl]
        if len(sp) > 1:
            f = max(sp) / min(sp)
            cross.append({"delta": dl, "factor": f, "ok": bool(f <= cross_field_factor)})
    passed = all(p["positive"] and p["spread_ok"] for p in per) and all(c["ok"] for c in cross)
    return {"passed": bool(passed), "verdict": "PASS" if passed else "FAIL", "spread_bound": spread_bound,
            "cross_field_factor": cross_field_factor, "reports": per, "cross_field": cross}


@dataclass
class DensityVerdict:
    reports: list
    result: dict
    provenance: dict

    @property
    def passed(self) -> bool:
        return self.result["passed"]

    def to_json(self) -> str:
        return _dumps({"verdict": self.result, "reports": [r.summary() for r in self.reports],
                       "provenance": self.provenance})


def run_density_verdict(config: ExperimentConfig) -> DensityVerdict:
    """Simulate every (field, start point) pair and compare exit densities with the envelope."""
    ball = config.ball
    edges = config.bin_edges()
    reports = []
    stream = 0
    for name in config.fields:
        fld = config.field(name)
        for frac, x in zip(config.start_delta_fraction_of_r, config.start_points()):
            stream += 1
            ens = simulate_exit(x, ball, fld, config.alpha, config.simulation(stream))
            rep = ratio_report(ens, edges, label=f"{name}_delta{frac:g}")
            rep.meta = {"stream": stream, "censored": ens.n_censored}
            reports.append(rep)
    res = verdict(reports, config.spread_bound_ratio, config.cross_field_factor)
    return DensityVerdict(reports, res, provenance(config))


def run_small_ring_check(config: ExperimentConfig, deltas=(0.5, 0.1, 0.02), field_name: str | None = None,
                         eta_halving: bool = True) -> dict:
    """Ring-hitting probability ``u(x)`` against ``int phi`` over ``(r + eps, r + eps + eta)``."""
    ball = config.ball
    r = ball.radius
    fld = config.field(field_name or config.fields[0])
    eps, eta = config.eps, config.eta_ring
    rows = []
    for i, frac in enumerate(deltas):
        x = ball.z.copy()
        x[-1] += r - frac * r
        sp = config.simulation(stream=500 + i)
        ens = simulate_exit(x, ball, fld, config.alpha, sp)
        rad = ens.exit_radius[ens.ok]
        row = {"delta": frac * r, "x": x.tolist()}
        for tag, width in (("eta", eta), ("eta_half", eta / 2)) if eta_halving else (("eta", eta),):
            hit = (rad > r + eps) & (rad < r + eps + width)
            u = float(hit.mean())
            se = float(math.sqrt(max(u * (1 - u), 1e-300) / hit.size))
            phi = phi_integral(x, r + eps, r + eps + width, ball, config.alpha)
            row[f"u_{tag}"] = u
            row[f"se_{tag}"] = se
            row[f"phi_{tag}"] = phi
            row[f"ratio_{tag}"] = u / phi
        if eta_halving:
            row["halving_ratio"] = row["u_eta"] / row["u_eta_half"] if row["u_eta_half"] > 0 else math.inf
        rows.append(row)
    ratios = [r_["ratio_eta"] for r_ in rows]
    spread = max(ratios) / min(ratios) if min(ratios) > 0 else math.inf
    return {"field": fld.name, "alpha": config.alpha, "eps": eps, "eta_ring": eta, "rows": rows,
            "spread": spread, "passed": bool(spread <= config.spread_bound_ratio and min(ratios) > 0),
            "provenance": provenance(config)}


# --------------------------------------------------------------------------
# audit bundle


def _interior_grid(ball: Ball, n: int, margin: float, seed: int) -> np.ndarray:
    """Deterministic points of ``B(z, r - margin)`` (polar grid in the (x_1, x_d) plane)."""
    r = ball.radius
    n_ang = max(2, int(round(math.sqrt(n))))
    n_rad = -(-n // n_ang)
    pts = []
    for i in range(n_rad):
        rho = (r - margin) * (i + 0.5) / n_rad
        for j in range(n_ang):
            ang = 2 * math.pi * (j + 0.37 * (i % 2)) / n_ang
            p = ball.z.copy()
            p[0] += rho * math.sin(ang)
            p[-1] += rho * math.cos(ang)
            pts.append(p)
    return np.array(pts[:n])


def run_lemma_audits(config: ExperimentConfig, include_mc: bool = True, keep: dict | None = None) -> dict:
    """Generator identities, theta class, sign audits, Lévy-measure lemmas and MC lemma checks.

    Individual failures are recorded, never raised.  When ``keep`` is a dict
    the sign-audit reports are stored in it under ``"super"`` and ``"sub"``.
    """
    a = config.alpha
    ball = config.ball
    r = ball.radius
    d = ball.d
    ed = np.zeros(d)
    ed[-1] = 1.0
    qs = config.quadrature()
    bundle = {"config": config.to_dict(), "provenance": provenance(config), "audits": {}}
    audits = bundle["audits"]

    def guarded(name, fn):
        try:
            audits[name] = fn()
        except Exception as exc:  # an audit failure must not abort the bundle
            audits[name] = {"passed": False, "error": f"{type(exc).__name__}: {exc}"}

    def gen_lambda():
        At = compute_A_tilde_alpha(a)
        pts = _interior_grid(ball, config.audit_grid_points, 1e-3 * r, config.seed)
        dev = [abs(pv_directional(lambda_profile(r, a), p, ed, a, qs, center=ball.z).value + At) / At
               for p in pts]
        return {"passed": bool(max(dev) <= 1e-6), "max_rel_deviation": max(dev), "points": len(pts),
                "target": -At}

    def gen_h():
        pts = _interior_grid(ball, config.audit_grid_points, 0.05 * r, config.seed)
        hp = h_profile(r, a)
        rel = []
        for p in pts:
            hv = float(hp(p, ball.center))
            rel.append(abs(pv_directional(hp, p, ed, a, qs, center=ball.z).value) / hv)
        return {"passed": bool(max(rel) <= 1e-5), "max_abs_over_h": max(rel), "points": len(pts)}

    params = choose_theta_params(r, config.eps, config.N, alpha=a, eta_ring=config.eta_ring)
    theta = build_theta(params)

    def theta_audit():
        rep = theta_class_audit(theta, params)
        return rep.to_dict()

    sign = {} if keep is None else keep

    def super_audit():
        rep = sign_audit_super(theta, params, Ball.centered(d, r), a, config.audit_grid_points, spec=qs)
        sign["super"] = rep
        return {"passed": rep.found, "b1": rep.b, "region_worst_margin": rep.region_worst_margin,
                "region_counts": rep.region_counts}

    def sub_audit():
        rep = sign_audit_sub(params, Ball.centered(d, r), a, config.audit_grid_points, spec=qs)
        sign["sub"] = rep
        return {"passed": rep.found, "b2": rep.b, "region_worst_margin": rep.region_worst_margin,
                "region_counts": rep.region_counts}

    def lemma_large():
        rng = np.random.default_rng(config.seed)
        ratios = []
        lengths_ok = True
        for name in config.fields:
            fld = config.field(name)
            for _ in range(200):
                R = rng.uniform(1.3, 4.0) * r
                rr = rng.uniform(0.1, 0.79) * R
                eta = rng.uniform(0.01, 0.99) * rr
                u = rng.normal(size=d)
                y = ball.z + u / np.linalg.norm(u) * rng.uniform(0, 0.999) * rr
                val = mu_ring_measure(y, fld, ball.z, R, eta, a, r=rr)
                A = fld.eval(y)
                env = float(np.sum(np.linalg.norm(A, axis=0) ** a)) * eta / R ** (1 + a)
                ratios.append(val / env)
                pre = ring_preimage(y, fld, ball.z, R, eta)
                for (om, im), (ip, op), na in zip(pre.minus, pre.plus, pre.column_norms):
                    for length in (im - om, op - ip):
                        lengths_ok &= eta / na * (1 - 1e-12) <= length <= 4 * eta / na * (1 + 1e-12)
        return {"passed": bool(lengths_ok and min(ratios) > 0), "ratio_min": min(ratios),
                "ratio_max": max(ratios), "interval_length_bounds_hold": bool(lengths_ok)}

    def lemma_large1():
        rng = np.random.default_rng(config.seed + 1)
        worst = math.inf
        out = {}
        for name in config.fields:
            fld = config.field(name)
            c = field_lower_constant(fld, a)
            for _ in range(200):
                R = rng.uniform(0.5, 3.0)
                u = rng.normal(size=d)
                x = ball.z + u / np.linalg.norm(u) * rng.uniform(0, 0.999) * R
                rx = (R - np.linalg.norm(x - ball.z)) / 3
                w = rng.normal(size=d)
                y = x + w / np.linalg.norm(w) * rng.uniform(0, 0.999) * rx
                m = mu_exterior_lower(y, fld, ball.z, R, a, x=x)
                worst = min(worst, m.exact / m.envelope)
            out[name] = c
        return {"passed": bool(worst >= 1.0), "min_exact_over_envelope": worst, "c_by_field": out}

    guarded("generator_lambda", gen_lambda)
    guarded("generator_h", gen_h)
    guarded("theta_class", theta_audit)
    guarded("sign_super", super_audit)
    guarded("sign_sub", sub_audit)
    guarded("lemma_ring_measure", lemma_large)
    guarded("lemma_exterior_lower", lemma_large1)

    if include_mc:
        fld0 = config.field(config.fields[0])

        def exit_envelope():
            rows = []
            for i, frac in enumerate((1.0, 0.7, 0.4, 0.2, 0.05)):
                x = ball.z.copy()
                x[-1] += r - frac * r
                ens = simulate_exit(x, ball, fld0, a, config.simulation(900 + i, config.audit_paths))
                m, ci = estimate_exit_time_mean(ens)
                env = (r * r - float(np.sum((x - ball.z) ** 2))) ** (a / 2)
                rows.append({"delta": frac * r, "mean": m, "ci": list(ci), "ratio": m / env})
            rat = [row["ratio"] for row in rows]
            return {"passed": bool(max(rat) / min(rat) <= 20), "spread": max(rat) / min(rat), "rows": rows}

        def ring_probability():
            R, eta = 2 * r, r / 4
            rows = []
            for i, frac in enumerate((1.0, 0.3, 0.05)):
                x = ball.z.copy()
                x[-1] += r - frac * r
                ens = simulate_exit(x, ball, fld0, a, config.simulation(950 + i, config.audit_paths))
                rad = ens.exit_radius[ens.ok]
                p = float(np.mean((rad >= R) & (rad <= R + eta)))
                env = (r * r - float(np.sum((x - ball.z) ** 2))) ** (a / 2) * eta / R ** (1 + a)
                rows.append({"delta": frac * r, "probability": p, "ratio": p / env})
            rat = [row["ratio"] for row in rows]
            return {"passed": bool(min(rat) > 0), "ratio_min": min(rat), "ratio_max": max(rat), "rows": rows}

        def uniform_exit():
            pts = []
            for k in range(20):
                frac = 0.02 + 0.98 * k / 19
                ang = 0.7 * k
                p = ball.z.copy()
                p[0] += (r - frac * r) * math.sin(ang)
                p[-1] += (r - frac * r) * math.cos(ang)
                pts.append(p)
            res = uniform_exit_probability(np.array(pts), ball, fld0, a,
                                           config.simulation(970, max(2000, config.audit_paths // 10)))
            ps = [row["p"] for row in res]
            return {"passed": bool(min(ps) > 0), "observed_p": min(ps), "rows": res}

        guarded("exit_time_envelope", exit_envelope)
        guarded("ring_probability_envelope", ring_probability)
        guarded("uniform_exit_probability", uniform_exit)

    bundle["passed"] = all(v.get("passed", False) for v in audits.values())
    return bundle


def summary_text(bundle: dict) -> str:
    lines = []
    for name, res in bundle["audits"].items():
        status = "PASS" if res.get("passed") else "FAIL"
        extra = {k: v for k, v in res.items() if k not in ("passed", "rows", "checks", "observed")
                 and not isinstance(v, (list, dict))}
        lines.append(f"{status}  {name}  " + " ".join(f"{k}={_fmt(v)}" for k, v in sorted(extra.items())))
    lines.append(f"overall: {'PASS' if bundle.get('passed') else 'FAIL'}")
    return "\n".join(lines) + "\n"


def _fmt(v):
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_text(path: str, text: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
