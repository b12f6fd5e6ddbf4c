"""Small self-contained SVG charts (line, scatter, stacked area).

Built with ElementTree so the output is always well-formed XML. These are
courtesy renderings; the CSV files are the canonical results.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from typing import Optional, Sequence

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=64, right=150, top=36, bottom=52)
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _num(v: float) -> str:
    return f"{v:.2f}"


class _Canvas:
    def __init__(self, xlim, ylim, title, xlabel, ylabel):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.pw = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
        self.root = ET.Element("svg", xmlns="http://www.w3.org/2000/svg",
                               width=str(WIDTH), height=str(HEIGHT),
                               viewBox=f"0 0 {WIDTH} {HEIGHT}")
        ET.SubElement(self.root, "rect", x="0", y="0", width=str(WIDTH), height=str(HEIGHT), fill="white")
        self._text(WIDTH / 2 - MARGIN["right"] / 2, 22, title, size=15, anchor="middle")
        self._text(MARGIN["left"] + self.pw / 2, HEIGHT - 12, xlabel, anchor="middle")
        t = self._text(16, MARGIN["top"] + self.ph / 2, ylabel, anchor="middle")
        t.set("transform", f"rotate(-90 16 {_num(MARGIN['top'] + self.ph / 2)})")
        self._axes()
        self.legend_rows = 0

    def sx(self, x):
        return MARGIN["left"] + (x - self.x0) / (self.x1 - self.x0) * self.pw

    def sy(self, y):
        return MARGIN["top"] + self.ph - (y - self.y0) / (self.y1 - self.y0) * self.ph

    def _text(self, x, y, s, size=12, anchor="start"):
        el = ET.SubElement(self.root, "text", x=_num(x), y=_num(y), fill="black")
        el.set("font-family", "sans-serif")
        el.set("font-size", str(size))
        el.set("text-anchor", anchor)
        el.text = s
        return el

    def _axes(self):
        g = ET.SubElement(self.root, "g", stroke="black")
        ET.SubElement(g, "rect", x=_num(MARGIN["left"]), y=_num(MARGIN["top"]),
                      width=_num(self.pw), height=_num(self.ph), fill="none")
        for i in range(6):
            xv = self.x0 + (self.x1 - self.x0) * i / 5
            yv = self.y0 + (self.y1 - self.y0) * i / 5
            X, Y = self.sx(xv), self.sy(yv)
            ET.SubElement(g, "line", x1=_num(X), y1=_num(MARGIN["top"] + self.ph),
                          x2=_num(X), y2=_num(MARGIN["top"] + self.ph + 5))
            ET.SubElement(g, "line", x1=_num(MARGIN["left"] - 5), y1=_num(Y),
                          x2=_num(MARGIN["left"]), y2=_num(Y))
            self._text(X, MARGIN["top"] + self.ph + 18, f"{xv:.3g}", size=10, anchor="middle")
            self._text(MARGIN["left"] - 8, Y + 4, f"{yv:.3g}", size=10, anchor="end")

    def legend(self, label, color):
        x = WIDTH - MARGIN["right"] + 12
        y = MARGIN["top"] + 8 + 18 * self.legend_rows
        ET.SubElement(self.root, "rect", x=_num(x), y=_num(y - 9), width="12", height="12", fill=color)
        self._text(x + 18, y + 2, label, size=11)
        self.legend_rows += 1

    def polyline(self, xs, ys, color, dashed=False):
        pts = " ".join(f"{_num(self.sx(x))},{_num(self.sy(y))}" for x, y in zip(xs, ys)
                       if math.isfinite(x) and math.isfinite(y))
        el = ET.SubElement(self.root, "polyline", points=pts, fill="none", stroke=color)
        el.set("stroke-width", "2")
        if dashed:
            el.set("stroke-dasharray", "5,4")

    def marker(self, x, y, color, r=3.5, hollow=False):
        ET.SubElement(self.root, "circle", cx=_num(self.sx(x)), cy=_num(self.sy(y)), r=str(r),
                      fill="none" if hollow else color, stroke=color)

    def polygon(self, xs, ys, color):
        pts = " ".join(f"{_num(self.sx(x))},{_num(self.sy(y))}" for x, y in zip(xs, ys))
        ET.SubElement(self.root, "polygon", points=pts, fill=color, stroke="none")

    def tostring(self) -> str:
        return ET.tostring(self.root, encoding="unicode")


def _limits(values, pad=0.05):
    vals = [v for v in values if v is not None and math.isfinite(v)]
    if not vals:
        return 0.0, 1.0
    lo, hi = min(vals), max(vals)
    span = hi - lo or 1.0
    return lo - pad * span, hi + pad * span


def line_plot(series: dict, title: str = "", xlabel: str = "", ylabel: str = "",
              highlight: Optional[dict] = None) -> str:
    """``series`` maps label -> (xs, ys); ``highlight`` maps label -> (x, y) to circle."""
    xs = [x for v in series.values() for x in v[0]]
    ys = [y for v in series.values() for y in v[1]]
    c = _Canvas(_limits(xs, 0), _limits(ys), title, xlabel, ylabel)
    for i, (label, (sx, sy)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        c.polyline(sx, sy, color)
        c.legend(label, color)
        if highlight and label in highlight:
            hx, hy = highlight[label]
            c.marker(hx, hy, color, r=6, hollow=True)
    return c.tostring()


def scatter_plot(series: dict, title: str = "", xlabel: str = "", ylabel: str = "",
                 front: Optional[Sequence[tuple[float, float]]] = None) -> str:
    """``series`` maps label -> list of (x, y); ``front`` is drawn as a dashed line."""
    pts = [p for v in series.values() for p in v]
    c = _Canvas(_limits([p[0] for p in pts]), _limits([p[1] for p in pts]), title, xlabel, ylabel)
    for i, (label, points) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        for x, y in points:
            c.marker(x, y, color)
        c.legend(label, color)
    if front:
        f = sorted(front)
        c.polyline([p[0] for p in f], [p[1] for p in f], "black", dashed=True)
    return c.tostring()


def stack_plot(xs: Sequence[float], layers: dict, title: str = "", xlabel: str = "",
               ylabel: str = "") -> str:
    """Stacked areas; ``layers`` maps label -> ys, stacked in insertion order."""
    total = [sum(v[i] for v in layers.values()) for i in range(len(xs))]
    c = _Canvas(_limits(xs, 0), (0.0, max(total) if total else 1.0), title, xlabel, ylabel)
    base = [0.0] * len(xs)
    for i, (label, ys) in enumerate(layers.items()):
        top = [b + y for b, y in zip(base, ys)]
        color = PALETTE[i % len(PALETTE)]
        c.polygon(list(xs) + list(reversed(xs)), top + list(reversed(base)), color)
        c.legend(label, color)
        base = top
    return c.tostring()
