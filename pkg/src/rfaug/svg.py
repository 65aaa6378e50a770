"""Minimal SVG scatter/line plotting with linear or log10 axes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

MARKERS = {"Ω_C": "square", "Ω_AK": "circle", "Ω_AS": "diamond", "Ω_SS": "triangle", "Ω_SK": "star"}
COLORS = {"Ω_C": "#1f77b4", "Ω_AK": "#2ca02c", "Ω_AS": "#d62728", "Ω_SS": "#9467bd", "Ω_SK": "#ff7f0e"}


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


@dataclass
class Axis:
    lo: float
    hi: float
    log: bool = False

    def __post_init__(self):
        if self.log and (self.lo <= 0 or self.hi <= 0):
            raise ValueError("log axis needs positive limits")
        if self.hi <= self.lo:
            self.hi = self.lo + (1.0 if not self.log else self.lo * 10)

    def frac(self, v: float) -> float:
        if self.log:
            return (math.log10(v) - math.log10(self.lo)) / (math.log10(self.hi) - math.log10(self.lo))
        return (v - self.lo) / (self.hi - self.lo)

    def ticks(self) -> list[float]:
        if self.log:
            a, b = math.floor(math.log10(self.lo)), math.ceil(math.log10(self.hi))
            return [10.0**k for k in range(a, b + 1) if self.lo <= 10.0**k <= self.hi]
        step = (self.hi - self.lo) / 5
        return [self.lo + i * step for i in range(6)]

    def label(self, v: float) -> str:
        if self.log:
            return f"1e{int(round(math.log10(v)))}"
        return _fmt(v)


@dataclass
class Plot:
    title: str
    x: Axis
    y: Axis
    xlabel: str = ""
    ylabel: str = ""
    width: int = 640
    height: int = 480
    margin: tuple[int, int, int, int] = (40, 150, 60, 70)  # top, right, bottom, left
    items: list[str] = field(default_factory=list)
    legend: list[tuple[str, str, str]] = field(default_factory=list)

    def _px(self, xv: float, yv: float) -> tuple[float, float]:
        t, r, b, l = self.margin
        w = self.width - l - r
        h = self.height - t - b
        return l + self.x.frac(xv) * w, t + (1 - self.y.frac(yv)) * h

    def _inside(self, xv, yv) -> bool:
        def ok(ax, v):
            return (v > 0 or not ax.log) and min(ax.lo, ax.hi) <= v <= max(ax.lo, ax.hi)
        return ok(self.x, xv) and ok(self.y, yv)

    def marker(self, xv: float, yv: float, shape: str, color: str, size: float = 4.0, filled: bool = False) -> None:
        if not self._inside(xv, yv):
            return
        cx, cy = self._px(xv, yv)
        fill = color if filled else "none"
        s = size
        if shape == "circle":
            el = f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{s:.2f}"'
        elif shape == "square":
            el = f'<rect x="{cx - s:.2f}" y="{cy - s:.2f}" width="{2 * s:.2f}" height="{2 * s:.2f}"'
        else:
            if shape == "diamond":
                pts = [(0, -s * 1.3), (s * 1.3, 0), (0, s * 1.3), (-s * 1.3, 0)]
            elif shape == "triangle":
                pts = [(0, -s * 1.3), (s * 1.2, s), (-s * 1.2, s)]
            else:  # five-pointed star
                pts = []
                for k in range(10):
                    rad = s * 1.5 if k % 2 == 0 else s * 0.6
                    ang = -math.pi / 2 + k * math.pi / 5
                    pts.append((rad * math.cos(ang), rad * math.sin(ang)))
            coords = " ".join(f"{cx + dx:.2f},{cy + dy:.2f}" for dx, dy in pts)
            el = f'<polygon points="{coords}"'
        self.items.append(el + f' fill="{fill}" stroke="{color}" stroke-width="1.2"/>')

    def line(self, xs, ys, color: str = "#000", width: float = 1.5, dash: str | None = None) -> None:
        pts = [self._px(a, b) for a, b in zip(xs, ys) if self._inside(a, b)]
        if len(pts) < 2:
            return
        d = " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(f'<polyline points="{d}" fill="none" stroke="{color}" stroke-width="{width}"{extra}/>')

    def band(self, xs_lo, xs_hi, ys, color: str) -> None:
        """Shaded region between two x-curves sharing the y samples."""
        lo = [(a, b) for a, b in zip(xs_lo, ys) if self._inside(a, b)]
        hi = [(a, b) for a, b in zip(xs_hi, ys) if self._inside(a, b)]
        if len(lo) < 2 or len(hi) < 2:
            return
        pts = [self._px(a, b) for a, b in lo] + [self._px(a, b) for a, b in reversed(hi)]
        d = " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
        self.items.append(f'<polygon points="{d}" fill="{color}" fill-opacity="0.15" stroke="none"/>')

    def add_legend(self, label: str, shape: str, color: str) -> None:
        if all(entry[0] != label for entry in self.legend):
            self.legend.append((label, shape, color))

    def render(self) -> str:
        t, r, b, l = self.margin
        W, H = self.width, self.height
        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
               f'font-family="sans-serif" font-size="11">',
               f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
               f'<text x="{W / 2:.1f}" y="{t / 2 + 4:.1f}" text-anchor="middle" font-size="13">{escape(self.title)}</text>']
        x0, y0 = l, H - b
        x1, y1 = W - r, t
        out.append(f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" fill="none" stroke="#333"/>')
        for v in self.x.ticks():
            px, _ = self._px(v, self.y.lo)
            out.append(f'<line x1="{px:.2f}" y1="{y0}" x2="{px:.2f}" y2="{y0 + 5}" stroke="#333"/>')
            out.append(f'<text x="{px:.2f}" y="{y0 + 18}" text-anchor="middle">{self.x.label(v)}</text>')
        for v in self.y.ticks():
            _, py = self._px(self.x.lo, v)
            out.append(f'<line x1="{x0 - 5}" y1="{py:.2f}" x2="{x0}" y2="{py:.2f}" stroke="#333"/>')
            out.append(f'<text x="{x0 - 8}" y="{py + 4:.2f}" text-anchor="end">{self.y.label(v)}</text>')
        out.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{H - 15}" text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(f'<text x="15" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 15 {(y0 + y1) / 2:.1f})">{escape(self.ylabel)}</text>')
        out.extend(self.items)
        for i, (label, shape, color) in enumerate(self.legend):
            ly = t + 15 + 18 * i
            out.append(_legend_marker(x1 + 18, ly, shape, color))
            out.append(f'<text x="{x1 + 30}" y="{ly + 4}">{escape(label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def _legend_marker(cx: float, cy: float, shape: str, color: str) -> str:
    if shape == "line":
        return f'<line x1="{cx - 8}" y1="{cy}" x2="{cx + 8}" y2="{cy}" stroke="{color}" stroke-width="1.5"/>'
    if shape == "circle":
        return f'<circle cx="{cx}" cy="{cy}" r="4" fill="none" stroke="{color}" stroke-width="1.2"/>'
    if shape == "square":
        return f'<rect x="{cx - 4}" y="{cy - 4}" width="8" height="8" fill="none" stroke="{color}" stroke-width="1.2"/>'
    if shape == "diamond":
        pts = [(0, -5), (5, 0), (0, 5), (-5, 0)]
    elif shape == "triangle":
        pts = [(0, -5), (5, 4), (-5, 4)]
    else:
        pts = []
        for k in range(10):
            rad = 6 if k % 2 == 0 else 2.4
            ang = -math.pi / 2 + k * math.pi / 5
            pts.append((rad * math.cos(ang), rad * math.sin(ang)))
    coords = " ".join(f"{cx + dx:.2f},{cy + dy:.2f}" for dx, dy in pts)
    return f'<polygon points="{coords}" fill="none" stroke="{color}" stroke-width="1.2"/>'
