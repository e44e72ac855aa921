"""Command line entry point: ``rectistable <subcommand> [--config PATH] [--seed N] ...``."""
from __future__ import annotations

import argparse
import csv
import glob
import io
import json
import os
import sys

import numpy as np

from .barriers import ThetaCap, build_theta, choose_theta_params, h_profile, lambda_profile, ring_profile
from .exit_mc import simulate_exit
from .nonlocal_quad import Lg_closed_form, pv_directional
from .report import (
    RatioReport,
    _dumps,
    _interior_grid,
    load_config,
    provenance,
    run_density_verdict,
    run_lemma_audits,
    run_small_ring_check,
    summary_text,
    verdict,
    write_text,
)
from .stable_math import compute_A_tilde_alpha
from .svg import emit_plots

SUBCOMMANDS = ("theta-build", "generator-verify", "lemma-audit", "simulate-exit", "density-verdict",
               "small-ring-check", "plots")


def _config(args):
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, paths=args.paths, alpha=args.alpha, out_dir=args.out)


def _out(cfg, name):
    return os.path.join(cfg.out_dir, name)


def cmd_theta_build(cfg, args):
    params = choose_theta_params(cfg.ball_radius_length, cfg.eps, cfg.N, alpha=cfg.alpha, eta_ring=cfg.eta_ring)
    theta = build_theta(params)
    from .barriers import theta_class_audit

    audit = theta_class_audit(theta, params)
    write_text(_out(cfg, "theta_pieces.csv"), theta.to_csv())
    write_text(_out(cfg, "theta.json"), _dumps({
        "params": {"r": params.r, "eps": params.eps, "eta_ring": params.eta_ring, "N": params.N,
                   "K1": params.K1, "K2": params.K2, "q": params.q, "K": params.K},
        "closed_form": theta.closed_form_values(), "audit": audit.to_dict(),
        "config": cfg.to_dict(), "provenance": provenance(cfg)}))
    print(f"theta class audit: {'PASS' if audit.passed else 'FAIL'}")
    return 0 if audit.passed else 1


def cmd_generator_verify(cfg, args):
    a, ball = cfg.alpha, cfg.ball
    r, d = ball.radius, ball.d
    ed = np.zeros(d)
    ed[-1] = 1.0
    qs = cfg.quadrature()
    At = compute_A_tilde_alpha(a)
    rows = []
    for kind, margin in (("lambda", 1e-3), ("h", 0.05), ("g", 1e-3)):
        for p in _interior_grid(ball, cfg.audit_grid_points, margin * r, cfg.seed):
            if kind == "lambda":
                gv = pv_directional(lambda_profile(r, a), p, ed, a, qs, center=ball.z)
                target, scale = -At, At
            elif kind == "h":
                prof = h_profile(r, a)
                gv = pv_directional(prof, p, ed, a, qs, center=ball.z)
                target, scale = 0.0, float(prof(p, ball.center))
            else:
                gv = pv_directional(ring_profile(ball, cfg.eps, cfg.eta_ring), p, ed, a, qs, center=ball.z)
                target = Lg_closed_form(p, ball, cfg.eps, cfg.eta_ring, a)
                scale = abs(target)
            rows.append({"profile": kind, "x": p.tolist(), "value": gv.value, "error_estimate": gv.error_estimate,
                         "target": target, "rel_deviation": abs(gv.value - target) / scale})
    tol = {"lambda": 1e-6, "h": 1e-5, "g": 1e-6}
    worst = {k: max(r_["rel_deviation"] for r_ in rows if r_["profile"] == k) for k in tol}
    ok = all(worst[k] <= tol[k] for k in tol)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["profile", "x", "value", "error_estimate", "target", "rel_deviation"])
    for r_ in rows:
        w.writerow([r_["profile"], " ".join(repr(c) for c in r_["x"]), repr(r_["value"]),
                    repr(r_["error_estimate"]), repr(r_["target"]), repr(r_["rel_deviation"])])
    write_text(_out(cfg, "generator_verify.csv"), buf.getvalue())
    write_text(_out(cfg, "generator_verify.json"), _dumps({"worst": worst, "tolerance": tol, "passed": ok,
                                                           "config": cfg.to_dict(), "provenance": provenance(cfg)}))
    for k in tol:
        print(f"{'PASS' if worst[k] <= tol[k] else 'FAIL'}  L_ed {k}: worst relative deviation {worst[k]:.3g}")
    return 0 if ok else 1


def cmd_lemma_audit(cfg, args):
    keep = {}
    bundle = run_lemma_audits(cfg, include_mc=not args.no_mc, keep=keep)
    write_text(_out(cfg, "lemma_audits.json"), _dumps(bundle))
    write_text(_out(cfg, "lemma_audits.txt"), summary_text(bundle))
    for kind, rep in keep.items():
        write_text(_out(cfg, f"sign_audit_{kind}.csv"), rep.to_csv())
    sys.stdout.write(summary_text(bundle))
    return 0 if bundle["passed"] else 1


def cmd_simulate_exit(cfg, args):
    name = args.field or cfg.fields[0]
    fld = cfg.field(name)
    for i, x in enumerate(cfg.start_points()):
        ens = simulate_exit(x, cfg.ball, fld, cfg.alpha, cfg.simulation(stream=i + 1))
        stem = f"exit_{name}_{i}"
        write_text(_out(cfg, stem + ".csv"), ens.to_csv())
        write_text(_out(cfg, stem + ".json"), _dumps({**ens.manifest(), "config": cfg.to_dict(),
                                                      "provenance": provenance(cfg)}))
        ok = ens.exit_time[ens.ok]
        print(f"{stem}: paths={ens.n_paths} censored={ens.n_censored} mean exit time={ok.mean():.6g}")
    return 0


def _write_reports(cfg, reports):
    index = []
    for rep in reports:
        write_text(_out(cfg, f"ratio_{rep.label}.csv"), rep.to_csv())
        index.append({"label": rep.label, "field": rep.field, "delta": rep.delta, "start": rep.start,
                      "alpha": rep.alpha, "paths": rep.paths, "meta": rep.meta})
    write_text(_out(cfg, "ratio_index.json"), _dumps(index))


def _read_reports(out_dir):
    path = os.path.join(out_dir, "ratio_index.json")
    if not os.path.exists(path):
        return []
    with open(path, encoding="utf-8") as fh:
        index = json.load(fh)
    reps = []
    for item in index:
        with open(os.path.join(out_dir, f"ratio_{item['label']}.csv"), encoding="utf-8") as fh:
            reps.append(RatioReport.from_csv(fh.read(), item["label"], field=item["field"], delta=item["delta"],
                                             start=item["start"], alpha=item["alpha"], paths=item["paths"]))
    return reps


def cmd_density_verdict(cfg, args):
    if args.recheck:
        reps = _read_reports(cfg.out_dir)
        res = verdict(reps, cfg.spread_bound_ratio, cfg.cross_field_factor)
    else:
        out = run_density_verdict(cfg)
        _write_reports(cfg, out.reports)
        write_text(_out(cfg, "density_verdict.json"), out.to_json())
        reps, res = out.reports, out.result
    for p in res["reports"]:
        print(f"{p['label']}: spread={p['spread']:.4g} positive={p['positive']}")
    for c in res["cross_field"]:
        print(f"delta={c['delta']:.4g}: cross-field factor {c['factor']:.3g}")
    print(f"verdict: {res['verdict']}")
    return 0 if res["passed"] else 1


def cmd_small_ring_check(cfg, args):
    res = run_small_ring_check(cfg)
    write_text(_out(cfg, "small_ring.json"), _dumps(res))
    for row in res["rows"]:
        print(f"delta={row['delta']:.4g}: u={row['u_eta']:.4g} ratio={row['ratio_eta']:.4g} "
              f"eta-halving ratio={row['halving_ratio']:.3g}")
    print(f"spread={res['spread']:.4g} {'PASS' if res['passed'] else 'FAIL'}")
    return 0 if res["passed"] else 1


class _SavedAudit:
    def __init__(self, kind, points):
        self.kind, self.points = kind, points


def _read_sign_audits(out_dir):
    reps = []
    for path in sorted(glob.glob(os.path.join(out_dir, "sign_audit_*.csv"))):
        kind = os.path.basename(path)[len("sign_audit_"):-4]
        with open(path, encoding="utf-8") as fh:
            pts = [{"x": [float(c) for c in rec["x"].split()], "region": int(rec["region"]),
                    "margin": float(rec["margin"])} for rec in csv.DictReader(fh)]
        reps.append(_SavedAudit(kind, pts))
    return reps


def cmd_plots(cfg, args):
    params = choose_theta_params(cfg.ball_radius_length, cfg.eps, cfg.N, alpha=cfg.alpha, eta_ring=cfg.eta_ring)
    paths = emit_plots(os.path.join(cfg.out_dir, "plots"), _read_reports(cfg.out_dir), build_theta(params),
                       ThetaCap(params.r, params.eps), _read_sign_audits(cfg.out_dir))
    for p in paths:
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value experiment file")
    common.add_argument("--seed", type=int, metavar="U64", help="master seed")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--paths", type=int, metavar="N", help="Monte Carlo paths per start point")
    common.add_argument("--alpha", type=float, metavar="X", help="stability index in (0, 2)")
    p = argparse.ArgumentParser(prog="rectistable", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "lemma-audit":
            sp.add_argument("--no-mc", action="store_true", help="skip the Monte Carlo audits")
        if name == "simulate-exit":
            sp.add_argument("--field", help="coefficient field name (default: first configured)")
        if name == "density-verdict":
            sp.add_argument("--recheck", action="store_true",
                            help="recompute the verdict from saved ratio CSVs without simulating")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = _config(args)
    handler = globals()["cmd_" + args.command.replace("-", "_")]
    return handler(cfg, args)


if __name__ == "__main__":
    sys.exit(main())
