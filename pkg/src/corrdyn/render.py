"""Dependency-free SVG figures.  Output is a pure function of the inputs
(fixed number formatting, no timestamps or random ids)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

_NEG = (33, 102, 172)
_MID = (247, 247, 247)
_POS = (178, 24, 43)
_SERIES = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666")


def _f(v):
    return f"{v:.2f}"


def diverging_color(value, bound):
    if bound <= 0 or not math.isfinite(value):
        return "rgb(247,247,247)"
    t = max(-1.0, min(1.0, value / bound))
    end = _POS if t > 0 else _NEG
    a = abs(t)
    rgb = [round(m + (e - m) * a) for m, e in zip(_MID, end)]
    return f"rgb({rgb[0]},{rgb[1]},{rgb[2]})"


class Svg:
    def __init__(self, width, height):
        self.width, self.height = width, height
        self.parts = []

    def add(self, text):
        self.parts.append(text)

    def rect(self, x, y, w, h, fill, stroke="none"):
        self.add(f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}" fill="{fill}" stroke="{stroke}"/>')

    def circle(self, x, y, r, fill="none", stroke="#000", cls=None, width=1.0):
        c = f' class="{cls}"' if cls else ""
        self.add(f'<circle{c} cx="{_f(x)}" cy="{_f(y)}" r="{_f(r)}" fill="{fill}" stroke="{stroke}" '
                 f'stroke-width="{_f(width)}"/>')

    def line(self, x1, y1, x2, y2, stroke="#000", width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.add(f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" stroke="{stroke}" '
                 f'stroke-width="{_f(width)}"{d}/>')

    def polyline(self, xs, ys, stroke="#000", width=1.0):
        pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y))
        self.add(f'<polyline points="{pts}" fill="none" stroke="{stroke}" stroke-width="{_f(width)}"/>')

    def text(self, x, y, s, size=10, anchor="start", cls=None):
        c = f' class="{cls}"' if cls else ""
        self.add(f'<text{c} x="{_f(x)}" y="{_f(y)}" font-size="{size}" font-family="sans-serif" '
                 f'text-anchor="{anchor}">{escape(str(s))}</text>')

    def open_group(self, cls=None, transform=None):
        attrs = (f' class="{cls}"' if cls else "") + (f' transform="{transform}"' if transform else "")
        self.add(f"<g{attrs}>")

    def close_group(self):
        self.add("</g>")

    def to_string(self):
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}">')
        return "\n".join([head, f'<rect width="{self.width}" height="{self.height}" fill="#fff"/>']
                         + self.parts + ["</svg>"]) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_string())
        return path


class _Scale:
    def __init__(self, lo, hi, a, b):
        if hi <= lo:
            lo, hi = lo - 1.0, hi + 1.0
        self.lo, self.hi, self.a, self.b = lo, hi, a, b

    def __call__(self, v):
        return self.a + (v - self.lo) / (self.hi - self.lo) * (self.b - self.a)


def _padded(lo, hi, frac=0.08):
    span = hi - lo if hi > lo else max(abs(hi), 1.0)
    return lo - frac * span, hi + frac * span


def factor_map(sol, ax_x=0, ax_y=1, title="", size=(560, 480)):
    """Scatter of row principal coordinates on two axes with one labelled
    marker per row."""
    W, H = size
    svg = Svg(W, H)
    F = sol.row_coords
    summary = sol.inertia_summary()
    x = F[:, ax_x] if sol.n_axes > ax_x else np.zeros(len(sol.row_labels))
    y = F[:, ax_y] if sol.n_axes > ax_y else np.zeros(len(sol.row_labels))
    m = 60
    sx = _Scale(*_padded(min(x.min(), 0.0), max(x.max(), 0.0)), m, W - 20)
    sy = _Scale(*_padded(min(y.min(), 0.0), max(y.max(), 0.0)), H - 50, 40)
    svg.text(W / 2, 20, title, 13, "middle")
    svg.line(sx(sx.lo), sy(0), sx(sx.hi), sy(0), "#999", dash="4,3")
    svg.line(sx(0), sy(sy.lo), sx(0), sy(sy.hi), "#999", dash="4,3")

    def axis_name(k):
        if k < len(summary):
            return f"Axis {k + 1} ({summary[k].percent:.1f}%)"
        return f"Axis {k + 1} (n/a)"

    svg.text(W / 2, H - 12, axis_name(ax_x), 11, "middle")
    svg.text(14, H / 2, axis_name(ax_y), 11, "middle")
    svg.open_group("rows")
    for lab, xi, yi in zip(sol.row_labels, x, y):
        svg.circle(sx(xi), sy(yi), 3.0, "#333", "none", cls="row-marker")
        svg.text(sx(xi) + 4, sy(yi) - 4, lab, 8)
    svg.close_group()
    return svg


def draw_topomap(svg, topo, cx, cy, radius_px, label=None, cell_stride=1):
    """Draw ``topo`` centred at (cx, cy) inside a head outline."""
    scale = radius_px / topo.radius
    gx, gy = topo.grid_x, topo.grid_y
    step = (gx[1] - gx[0]) * scale * cell_stride if len(gx) > 1 else radius_px
    bound = topo.bounds[1]
    svg.open_group("topomap")
    for iy in range(0, len(gy), cell_stride):
        for ix in range(0, len(gx), cell_stride):
            v = topo.grid[iy, ix]
            if not math.isfinite(v):
                continue
            px = cx + gx[ix] * scale - step / 2
            py = cy - gy[iy] * scale - step / 2
            svg.rect(px, py, step + 0.05, step + 0.05, diverging_color(v, bound))
    svg.circle(cx, cy, radius_px, "none", "#000", width=1.0)
    svg.add(f'<polyline points="{_f(cx - 0.12 * radius_px)},{_f(cy - 0.99 * radius_px)} '
            f'{_f(cx)},{_f(cy - 1.12 * radius_px)} {_f(cx + 0.12 * radius_px)},{_f(cy - 0.99 * radius_px)}" '
            f'fill="none" stroke="#000"/>')
    for (ex, ey) in topo.sites:
        svg.circle(cx + ex * scale, cy - ey * scale, max(0.8, radius_px / 60), "#000", "none", cls="electrode")
    if label:
        svg.text(cx, cy + radius_px + 12, label, 9, "middle")
    svg.close_group()


def color_bar(svg, x, y, w, h, bound, n=21):
    svg.open_group("colorbar")
    for i in range(n):
        v = bound * (1 - 2 * i / (n - 1))
        svg.rect(x, y + i * h / n, w, h / n + 0.05, diverging_color(v, bound))
    svg.text(x + w + 4, y + 8, f"{bound:+.3g}", 9)
    svg.text(x + w + 4, y + h, f"{-bound:+.3g}", 9)
    svg.close_group()


def topomap_figure(topo, title=""):
    svg = Svg(320, 320)
    svg.text(160, 18, title, 12, "middle")
    draw_topomap(svg, topo, 150, 165, 120,
                 None if topo.time_ms is None else f"{topo.time_ms:g} ms")
    color_bar(svg, 285, 60, 10, 200, topo.bounds[1])
    return svg


def _curve_panel(svg, times, series, box, extrema=(), ylabel=""):
    """Plot ``series`` = [(values, color, width)] in ``box`` = (x0, y0, x1, y1)."""
    x0, y0, x1, y1 = box
    vals = np.concatenate([np.asarray(v, dtype=float)[np.isfinite(v)] for v, _, _ in series] or [np.zeros(1)])
    lo, hi = _padded(float(min(vals.min(), 0.0)), float(max(vals.max(), 0.0)))
    sx = _Scale(float(times[0]), float(times[-1]), x0, x1)
    sy = _Scale(lo, hi, y1, y0)
    svg.rect(x0, y0, x1 - x0, y1 - y0, "none", "#000")
    svg.line(x0, sy(0), x1, sy(0), "#aaa", dash="3,3")
    n_ticks = 6
    for i in range(n_ticks + 1):
        t = times[0] + (times[-1] - times[0]) * i / n_ticks
        svg.line(sx(t), y1, sx(t), y1 + 4, "#000")
        svg.text(sx(t), y1 + 15, f"{t:g}", 9, "middle")
    svg.text((x0 + x1) / 2, y1 + 30, "time (ms)", 10, "middle")
    svg.text(x0 - 8, y0 - 6, ylabel, 10, "start")
    for values, color, width in series:
        svg.polyline([sx(t) for t in times], [sy(v) for v in values], color, width)
    svg.open_group("extrema")
    for ex in extrema:
        svg.circle(sx(ex.time_ms), sy(ex.value), 3.5, "none", "#000", cls=f"extremum-{ex.polarity}")
    svg.close_group()
    return sx


def profile_figure(curves, groups, extrema, topos, title=""):
    """Electrode contribution panel: thin curves for group members, bold group
    means, and a topography inset above each extremum."""
    W, H = 900, 460
    svg = Svg(W, H)
    svg.text(W / 2, 18, title, 13, "middle")
    index = {e: i for i, e in enumerate(curves.electrodes)}
    series = []
    for gi, g in enumerate(groups):
        color = _SERIES[gi % len(_SERIES)]
        for e in g.electrodes:
            series.append((curves.signed[index[e]], color, 0.4))
        series.append((g.mean_curve, color, 2.2))
    box = (60, 170, W - 30, H - 50)
    sx = _curve_panel(svg, curves.times_ms, series, box, extrema, "eigenvector (signed)")
    for ex, topo in zip(extrema, topos):
        draw_topomap(svg, topo, sx(ex.time_ms), 95, 48, f"{ex.time_ms:g} ms", cell_stride=2)
    if topos:
        color_bar(svg, W - 22, 40, 8, 110, topos[0].bounds[1])
    return svg


def time_curve_figure(times, values, extrema, topos, title=""):
    W, H = 900, 420
    svg = Svg(W, H)
    svg.text(W / 2, 18, title, 13, "middle")
    box = (60, 150, W - 30, H - 50)
    sx = _curve_panel(svg, np.asarray(times), [(values, "#1f4e9c", 1.8)], box, extrema, "time coordinate")
    for ex, topo in zip(extrema, topos):
        draw_topomap(svg, topo, sx(ex.time_ms), 85, 40, f"{ex.time_ms:g} ms", cell_stride=2)
    return svg
