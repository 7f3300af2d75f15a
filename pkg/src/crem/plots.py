"""Hand-rolled SVG line plots, no rendering dependencies.

Good enough for the standard figures: KL/N against beta with the hardness
threshold marked, and log-log deviation against block depth with a -1/2
reference slope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 70, 20, 30, 50
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass
class Series:
    label: str
    x: list[float]
    y: list[float]


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min(s for s in (1.0, 2.0, 2.5, 5.0, 10.0) if s * mag >= raw) * mag
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-9 * step:
        out.append(round(t, 12))
        t += step
    return out


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.1e}"
    return f"{v:g}"


def line_plot(series: list[Series], xlabel: str, ylabel: str, title: str,
              vline: float | None = None, loglog: bool = False,
              ref_slope: float | None = None) -> str:
    """Render series to a standalone SVG document string."""
    if not series or not any(s.x for s in series):
        raise ValueError("nothing to plot")

    def tx(v):
        return math.log10(v) if loglog else v

    xs = [tx(v) for s in series for v in s.x]
    ys = [tx(v) for s in series for v in s.y if not loglog or v > 0]
    if vline is not None and not loglog:
        xs.append(vline)
    if not ys:
        raise ValueError("no positive data on log axes")
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    pw, ph = _W - _ML - _MR, _H - _MT - _MB

    def px(v):
        return _ML + (tx(v) - x0) / (x1 - x0) * pw

    def py(v):
        return _MT + ph - (tx(v) - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
           f'height="{_H}" viewBox="0 0 {_W} {_H}">',
           f'<rect width="{_W}" height="{_H}" fill="white"/>',
           f'<text x="{_W / 2}" y="18" text-anchor="middle" '
           f'font-size="14">{title}</text>']
    # axes
    out.append(f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" '
               'fill="none" stroke="black"/>')
    for t in _ticks(x0, x1):
        x = _ML + (t - x0) / (x1 - x0) * pw
        lbl = _fmt(10.0 ** t) if loglog else _fmt(t)
        out.append(f'<line x1="{x:.1f}" y1="{_MT + ph}" x2="{x:.1f}" '
                   f'y2="{_MT + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{x:.1f}" y="{_MT + ph + 18}" '
                   f'text-anchor="middle" font-size="11">{lbl}</text>')
    for t in _ticks(y0, y1):
        y = _MT + ph - (t - y0) / (y1 - y0) * ph
        lbl = _fmt(10.0 ** t) if loglog else _fmt(t)
        out.append(f'<line x1="{_ML - 4}" y1="{y:.1f}" x2="{_ML}" '
                   f'y2="{y:.1f}" stroke="black"/>')
        out.append(f'<text x="{_ML - 8}" y="{y + 4:.1f}" text-anchor="end" '
                   f'font-size="11">{lbl}</text>')
    out.append(f'<text x="{_ML + pw / 2}" y="{_H - 12}" text-anchor="middle" '
               f'font-size="12">{xlabel}</text>')
    out.append(f'<text x="16" y="{_MT + ph / 2}" text-anchor="middle" '
               f'font-size="12" transform="rotate(-90 16 {_MT + ph / 2})">'
               f'{ylabel}</text>')

    if vline is not None and (not loglog) and x0 <= vline <= x1:
        x = px(vline)
        out.append(f'<line x1="{x:.1f}" y1="{_MT}" x2="{x:.1f}" '
                   f'y2="{_MT + ph}" stroke="gray" stroke-dasharray="4 3"/>')

    for i, s in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        pts = [(px(a), py(b)) for a, b in zip(s.x, s.y)
               if not loglog or (a > 0 and b > 0)]
        path = " ".join(f"{a:.1f},{b:.1f}" for a, b in pts)
        out.append(f'<polyline points="{path}" fill="none" stroke="{color}" '
                   'stroke-width="1.5"/>')
        for a, b in pts:
            out.append(f'<circle cx="{a:.1f}" cy="{b:.1f}" r="2.5" '
                       f'fill="{color}"/>')
        out.append(f'<text x="{_ML + pw - 6}" y="{_MT + 16 + 14 * i}" '
                   f'text-anchor="end" font-size="11" fill="{color}">'
                   f'{s.label}</text>')

    if ref_slope is not None and loglog:
        # reference power law anchored at the first point of the first series
        s = series[0]
        ax, ay = s.x[0], s.y[0]
        bx = s.x[-1]
        by = ay * (bx / ax) ** ref_slope
        out.append(f'<line x1="{px(ax):.1f}" y1="{py(ay):.1f}" '
                   f'x2="{px(bx):.1f}" y2="{py(by):.1f}" stroke="black" '
                   'stroke-dasharray="6 3"/>')
        out.append(f'<text x="{px(bx) - 4:.1f}" y="{py(by) - 6:.1f}" '
                   f'text-anchor="end" font-size="11">slope {ref_slope:g}'
                   '</text>')

    out.append("</svg>")
    return "\n".join(out)


def emit_plot(rows: list[dict], kind: str) -> str:
    """Build a figure from report rows; kind selects columns and style."""
    if not rows:
        raise ValueError("empty report")

    def col(name):
        if name not in rows[0]:
            raise ValueError(f"report lacks column {name!r}")
        return [float(r[name]) for r in rows]

    if kind == "kl-vs-beta":
        vline = float(rows[0]["beta_G"]) if "beta_G" in rows[0] else None
        return line_plot([Series("mean KL/N", col("beta"), col("mean_kl_per_n"))],
                         "beta", "KL / N", "Sampler KL cost against beta",
                         vline=vline)
    if kind == "deviation-vs-M":
        return line_plot([Series("L2 deviation", col("M"), col("dev_l2")),
                          Series("bound", col("M"), col("bound_l2"))],
                         "M", "deviation of KL/N",
                         "Concentration against block depth",
                         loglog=True, ref_slope=-0.5)
    if kind == "steep-rate":
        return line_plot([Series("P(chain steep)", col("N"), col("p_hat"))],
                         "N", "probability", "Steep-chain rarity",
                         loglog=False)
    if kind == "brw":
        return line_plot([Series("f_hat", col("beta"), col("f_hat")),
                          Series("f limit", col("beta"), col("f_limit"))],
                         "beta", "free energy per level",
                         "Branching random walk free energy")
    raise ValueError(f"unknown plot kind {kind!r}")
