"""Plain-text SVG figures for ratio reports, barrier profiles and sign-audit margins."""
from __future__ import annotations

import math
import os
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["Axes", "overlay_svg", "ratio_svg", "theta_svg", "margin_map_svg", "emit_plots"]

W, H = 640, 440
ML, MR, MT, MB = 70, 20, 40, 55
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _num(v: float) -> str:
    return f"{v:.2f}"


def _nice_ticks(lo, hi, log):
    if log:
        a, b = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
        step = max(1, (b - a) // 6)
        return [10.0**k for k in range(a, b + 1, step) if lo <= 10.0**k <= hi]
    return list(np.linspace(lo, hi, 5))


class Axes:
    """A single panel with optional log scales; points outside the positive range are dropped on log axes."""

    def __init__(self, title="", xlabel="", ylabel="", xlog=False, ylog=False):
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.xlog, self.ylog = xlog, ylog
        self.items = []

    def _keep(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        m = np.isfinite(x) & np.isfinite(y)
        if self.xlog:
            m &= x > 0
        if self.ylog:
            m &= y > 0
        return m

    def line(self, x, y, color=None, label=None, dash=None):
        self.items.append(("line", np.asarray(x, float), np.asarray(y, float), color, label, dash))

    def points(self, x, y, color=None, label=None, lo=None, hi=None):
        self.items.append(("points", np.asarray(x, float), np.asarray(y, float), color, label, (lo, hi)))

    def _limits(self):
        xs, ys = [], []
        for kind, x, y, *_rest in self.items:
            m = self._keep(x, y)
            xs.append(x[m])
            ys.append(y[m])
        xs = np.concatenate(xs) if xs else np.array([])
        ys = np.concatenate(ys) if ys else np.array([])
        if xs.size == 0:
            return (1.0, 10.0) if self.xlog else (0.0, 1.0), (1.0, 10.0) if self.ylog else (0.0, 1.0)

        def pad(v, log):
            lo, hi = float(v.min()), float(v.max())
            if lo == hi:
                return (lo / 2, hi * 2) if log else (lo - 0.5, hi + 0.5)
            if log:
                f = (hi / lo) ** 0.05
                return lo / f, hi * f
            d = 0.05 * (hi - lo)
            return lo - d, hi + d

        return pad(xs, self.xlog), pad(ys, self.ylog)

    def render(self) -> str:
        (x0, x1), (y0, y1) = self._limits()
        pw, ph = W - ML - MR, H - MT - MB

        def tx(x):
            x = np.asarray(x, float)
            u = (np.log10(x) - math.log10(x0)) / (math.log10(x1) - math.log10(x0)) if self.xlog \
                else (x - x0) / (x1 - x0)
            return ML + u * pw

        def ty(y):
            y = np.asarray(y, float)
            u = (np.log10(y) - math.log10(y0)) / (math.log10(y1) - math.log10(y0)) if self.ylog \
                else (y - y0) / (y1 - y0)
            return MT + ph - u * ph

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
               f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
               f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="15">{escape(self.title)}</text>',
               f'<rect x="{ML}" y="{MT}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
        for t in _nice_ticks(x0, x1, self.xlog):
            px = _num(float(tx(t)))
            out.append(f'<line x1="{px}" y1="{MT + ph}" x2="{px}" y2="{MT + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{px}" y="{MT + ph + 18}" text-anchor="middle" font-size="11">{t:.3g}</text>')
        for t in _nice_ticks(y0, y1, self.ylog):
            py = _num(float(ty(t)))
            out.append(f'<line x1="{ML - 5}" y1="{py}" x2="{ML}" y2="{py}" stroke="black"/>')
            out.append(f'<text x="{ML - 8}" y="{py}" text-anchor="end" font-size="11">{t:.3g}</text>')
        out.append(f'<text x="{ML + pw / 2}" y="{H - 12}" text-anchor="middle" font-size="13">'
                   f'{escape(self.xlabel)}</text>')
        out.append(f'<text x="16" y="{MT + ph / 2}" text-anchor="middle" font-size="13" '
                   f'transform="rotate(-90 16 {MT + ph / 2})">{escape(self.ylabel)}</text>')
        legend = []
        for i, (kind, x, y, color, label, extra) in enumerate(self.items):
            color = color or COLORS[i % len(COLORS)]
            m = self._keep(x, y)
            if kind == "line":
                if m.sum() >= 2:
                    pts = " ".join(f"{_num(a)},{_num(b)}" for a, b in zip(tx(x[m]), ty(y[m])))
                    dash = f' stroke-dasharray="{extra}"' if extra else ""
                    out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
            else:
                lo, hi = extra
                for j in np.flatnonzero(m):
                    cx, cy = _num(float(tx(x[j]))), _num(float(ty(y[j])))
                    if lo is not None and hi is not None:
                        a, b = float(lo[j]), float(hi[j])
                        if self.ylog:
                            a = max(a, y0)
                        if math.isfinite(a) and math.isfinite(b) and b > 0:
                            out.append(f'<line x1="{cx}" y1="{_num(float(ty(max(a, y0))))}" x2="{cx}" '
                                       f'y2="{_num(float(ty(min(b, y1))))}" stroke="{color}"/>')
                    out.append(f'<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>')
            if label:
                legend.append((label, color))
        for i, (label, color) in enumerate(legend):
            y = MT + 14 + 16 * i
            out.append(f'<rect x="{W - MR - 170}" y="{y - 8}" width="10" height="10" fill="{color}"/>')
            out.append(f'<text x="{W - MR - 155}" y="{y + 1}" font-size="11">{escape(label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def _centers(rows):
    return np.array([math.sqrt(r["lo"] * r["hi"]) for r in rows])


def overlay_svg(report) -> str:
    """Empirical exit density against the comparison density, log-log in ``y - r``."""
    rows = getattr(report, "rows", []) or []
    r = rows[0]["lo"] if rows else 1.0
    ax = Axes(f"exit density {getattr(report, 'label', '')}", "y - r", "density", xlog=True, ylog=True)
    if rows:
        c = _centers(rows) - r
        ax.points(c, [row["density"] for row in rows], label="empirical",
                  lo=[row["density_lo"] for row in rows], hi=[row["density_hi"] for row in rows])
        ax.line(c, [row["phi_avg"] for row in rows], label="phi (bin average)", color="#d62728")
    return ax.render()


def ratio_svg(reports) -> str:
    """Per-bin ratio with confidence whiskers, one series per report."""
    ax = Axes("density / phi by bin", "y - r", "ratio", xlog=True, ylog=True)
    for i, rep in enumerate(reports):
        rows = [row for row in rep.rows if row["count"] > 0]
        if not rows:
            continue
        r = rep.rows[0]["lo"]
        ax.points(_centers(rows) - r, [row["ratio"] for row in rows], color=COLORS[i % len(COLORS)],
                  label=rep.label, lo=[row["ratio_lo"] for row in rows], hi=[row["ratio_hi"] for row in rows])
    return ax.render()


def theta_svg(theta=None, cap=None, n: int = 600) -> str:
    """``q theta(v)`` and ``q Theta(v)`` on ``[0, r^2)``."""
    ax = Axes("barrier profiles", "v", "q * profile")
    for prof, label, dash in ((theta, "theta", None), (cap, "Theta", "5,3")):
        if prof is None:
            continue
        v = np.linspace(0.0, prof.r**2, n, endpoint=False)
        ax.line(v, prof.q * prof.derivative(v, 0), label=label, dash=dash)
    return ax.render()


def margin_map_svg(report) -> str:
    """Sign-audit margins against ``|x|``, coloured by region."""
    kind = getattr(report, "kind", "")
    ax = Axes(f"sign audit margins ({kind})", "|x|", "margin")
    pts = getattr(report, "points", []) or []
    for reg in (1, 2, 3):
        sel = [p for p in pts if p["region"] == reg]
        if sel:
            ax.points([math.hypot(*p["x"]) for p in sel], [p["margin"] for p in sel],
                      color=COLORS[reg - 1], label=f"region {reg}")
    return ax.render()


def emit_plots(out_dir: str, reports=(), theta=None, cap=None, sign_reports=()) -> list[str]:
    """Write every figure under ``out_dir``; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    files = {}
    for rep in reports:
        files[f"overlay_{rep.label or 'report'}.svg"] = overlay_svg(rep)
    files["ratios.svg"] = ratio_svg(list(reports))
    if theta is not None or cap is not None:
        files["theta_profiles.svg"] = theta_svg(theta, cap)
    for rep in sign_reports:
        files[f"margins_{rep.kind}.svg"] = margin_map_svg(rep)
    paths = []
    for name, text in sorted(files.items()):
        p = os.path.join(out_dir, name)
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        paths.append(p)
    return paths
