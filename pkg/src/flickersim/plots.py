"""Minimal SVG line charts for sweep curves."""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

SHAPE_COLOURS = {
    "sinusoidal": "#1f5fbf",
    "triangular": "#2a9d3a",
    "trapezoidal": "#8e44ad",
    "rectangular": "#c0392b",
}

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=150, top=40, bottom=50)


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=mag * 10)
    first = math.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi + 1e-9 * step:
        out.append(round(v, 12))
        v += step
    return out


def line_chart(series: dict[str, list[tuple[float, float]]], title: str, xlabel: str, ylabel: str,
               log_x: bool = False, colours: dict[str, str] | None = None) -> str:
    """Render named (x, y) series as an SVG document string."""
    colours = colours or {}
    pts = [p for s in series.values() for p in s if not math.isnan(p[1])]
    if log_x:
        pts = [p for p in pts if p[0] > 0]
    fx = (lambda v: math.log10(v)) if log_x else (lambda v: v)
    xs = [fx(p[0]) for p in pts] or [0.0, 1.0]
    ys = [p[1] for p in pts] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x1 = x0 + 1
    y0, y1 = 0.0, max(ys) * 1.05 or 1.0
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(v):
        return MARGIN["left"] + (fx(v) - x0) / (x1 - x0) * pw

    def sy(v):
        return MARGIN["top"] + ph - (v - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    if log_x:
        xt = [10.0**e for e in range(math.floor(x0), math.ceil(x1) + 1) if x0 - 1e-9 <= e <= x1 + 1e-9]
    else:
        xt = _ticks(x0, x1)
    for v in xt:
        X = sx(v)
        out.append(f'<line x1="{X:.1f}" y1="{MARGIN["top"]}" x2="{X:.1f}" y2="{MARGIN["top"] + ph}" stroke="#ddd"/>')
        out.append(f'<text x="{X:.1f}" y="{MARGIN["top"] + ph + 16}" text-anchor="middle">{v:g}</text>')
    for v in _ticks(y0, y1):
        Y = sy(v)
        out.append(f'<line x1="{MARGIN["left"]}" y1="{Y:.1f}" x2="{MARGIN["left"] + pw}" y2="{Y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{Y + 4:.1f}" text-anchor="end">{v:g}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{MARGIN["top"] + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    for i, (name, s) in enumerate(series.items()):
        colour = colours.get(name, "#333")
        good = [(x, y) for x, y in s if not math.isnan(y) and (x > 0 or not log_x)]
        if good:
            path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in good)
            out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{path}"/>')
        ly = MARGIN["top"] + 14 + 18 * i
        lx = MARGIN["left"] + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_plots(summary, out_dir, run_id: str) -> list[Path]:
    """One chart per (carrier, depth) over f_m and one per (carrier, f_m) over depth."""
    out = Path(out_dir)
    written = []
    by_panel: dict = {}
    for (m_c, shape, depth), pts in summary.frequency_curves.items():
        by_panel.setdefault(("f", m_c, depth), {})[shape] = pts
    for (m_c, shape, f_m), pts in summary.depth_curves.items():
        by_panel.setdefault(("d", m_c, f_m), {})[shape] = pts
    for (kind, m_c, val), series in sorted(by_panel.items()):
        series = {k: series[k] for k in SHAPE_COLOURS if k in series}
        if kind == "f":
            name = f"{run_id}_mc{m_c:g}_depth{val:g}.svg"
            svg = line_chart(series, f"Pst vs f_m, m_c = {m_c:g}, depth = {val:g} %", "f_m [Hz]", "Pst",
                             log_x=True, colours=SHAPE_COLOURS)
        else:
            name = f"{run_id}_mc{m_c:g}_fm{val:g}.svg"
            svg = line_chart(series, f"Pst vs depth, m_c = {m_c:g}, f_m = {val:g} Hz", "depth [%]", "Pst",
                             colours=SHAPE_COLOURS)
        path = out / name
        path.write_text(svg)
        written.append(path)
    return written
