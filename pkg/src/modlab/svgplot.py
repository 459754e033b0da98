"""Minimal standalone SVG charts (polylines, bars, axes)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 40, 55
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2")


@dataclass
class Series:
    label: str
    x: list[float]
    y: list[float]


def _fmt(v: float) -> str:
    return f"{v:.3g}"


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        a, b = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
        return [10.0 ** k for k in range(a, b + 1)]
    if hi == lo:
        return [lo]
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / 5))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= 6:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


class _Axes:
    def __init__(self, xs, ys, logx, logy):
        self.logx, self.logy = logx, logy
        xs = [v for v in xs if math.isfinite(v) and (v > 0 or not logx)]
        ys = [v for v in ys if math.isfinite(v) and (v > 0 or not logy)]
        self.x0, self.x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
        self.y0, self.y1 = (min(ys), max(ys)) if ys else (0.0, 1.0)
        if not logy:
            self.y0 = min(self.y0, 0.0)
        if self.x0 == self.x1:
            self.x0, self.x1 = self.x0 - 0.5, self.x1 + 0.5
        if self.y0 == self.y1:
            self.y0, self.y1 = self.y0 - 0.5, self.y1 + 0.5

    def _t(self, v, lo, hi, log):
        if log:
            v, lo, hi = math.log10(v), math.log10(lo), math.log10(hi)
        return (v - lo) / (hi - lo)

    def px(self, v):
        return LEFT + self._t(v, self.x0, self.x1, self.logx) * (W - LEFT - RIGHT)

    def py(self, v):
        return H - BOTTOM - self._t(v, self.y0, self.y1, self.logy) * (H - TOP - BOTTOM)

    def frame(self, title, xlabel, ylabel) -> list[str]:
        out = [
            f'<rect x="{LEFT}" y="{TOP}" width="{W - LEFT - RIGHT}" height="{H - TOP - BOTTOM}" fill="none" stroke="#333"/>',
            f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
            f'<text x="{(LEFT + W - RIGHT) / 2:.1f}" y="{H - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
            f'<text x="16" y="{(TOP + H - BOTTOM) / 2:.1f}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 16 {(TOP + H - BOTTOM) / 2:.1f})">{escape(ylabel)}</text>',
        ]
        for t in _ticks(self.x0, self.x1, self.logx):
            if self.x0 <= t <= self.x1:
                x = self.px(t)
                out.append(f'<line x1="{x:.1f}" y1="{H - BOTTOM}" x2="{x:.1f}" y2="{H - BOTTOM + 5}" stroke="#333"/>')
                out.append(f'<text x="{x:.1f}" y="{H - BOTTOM + 18}" text-anchor="middle" font-size="10">{_fmt(t)}</text>')
        for t in _ticks(self.y0, self.y1, self.logy):
            if self.y0 <= t <= self.y1:
                y = self.py(t)
                out.append(f'<line x1="{LEFT - 5}" y1="{y:.1f}" x2="{LEFT}" y2="{y:.1f}" stroke="#333"/>')
                out.append(f'<text x="{LEFT - 8}" y="{y + 3:.1f}" text-anchor="end" font-size="10">{_fmt(t)}</text>')
        return out


def _document(body: list[str]) -> str:
    head = f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">'
    return "\n".join([head, f'<rect width="{W}" height="{H}" fill="white"/>', *body, "</svg>", ""])


def _legend(labels: list[str]) -> list[str]:
    out = []
    for i, lab in enumerate(labels[:20]):
        y = TOP + 10 + 16 * i
        c = PALETTE[i % len(PALETTE)]
        out.append(f'<line x1="{W - RIGHT + 12}" y1="{y}" x2="{W - RIGHT + 30}" y2="{y}" stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{W - RIGHT + 35}" y="{y + 4}" font-size="11">{escape(lab)}</text>')
    return out


def line_plot(series: list[Series], title: str, xlabel: str, ylabel: str,
              logx: bool = False, logy: bool = False, hline: float | None = None) -> str:
    ax = _Axes([v for s in series for v in s.x], [v for s in series for v in s.y] + ([hline] if hline else []), logx, logy)
    body = ax.frame(title, xlabel, ylabel)
    if hline is not None:
        y = ax.py(hline)
        body.append(f'<line x1="{LEFT}" y1="{y:.1f}" x2="{W - RIGHT}" y2="{y:.1f}" stroke="#888" stroke-dasharray="5,4"/>')
    for i, s in enumerate(series):
        pts = [(ax.px(x), ax.py(y)) for x, y in zip(s.x, s.y)
               if math.isfinite(x) and math.isfinite(y) and (x > 0 or not logx) and (y > 0 or not logy)]
        c = PALETTE[i % len(PALETTE)]
        if len(pts) > 1:
            body.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="'
                        + " ".join(f"{x:.1f},{y:.1f}" for x, y in pts) + '"/>')
        body.extend(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="2.5" fill="{c}"/>' for x, y in pts)
    body.extend(_legend([s.label for s in series]))
    return _document(body)


def bar_plot(groups: list[str], bars: dict[str, list[float]], title: str, ylabel: str) -> str:
    """Grouped bars: one group per entry of ``groups``, one bar per key of ``bars``."""
    vals = [v for vs in bars.values() for v in vs if math.isfinite(v)]
    ax = _Axes([0.0, float(max(len(groups), 1))], vals + [0.0], False, False)
    body = ax.frame(title, "", ylabel)
    k = max(len(bars), 1)
    width = (W - LEFT - RIGHT) / max(len(groups), 1)
    for gi, g in enumerate(groups):
        x0 = LEFT + gi * width
        for bi, (name, vs) in enumerate(bars.items()):
            v = vs[gi]
            if not math.isfinite(v):
                continue
            bx = x0 + width * 0.1 + bi * width * 0.8 / k
            y = ax.py(v)
            body.append(f'<rect x="{bx:.1f}" y="{y:.1f}" width="{width * 0.8 / k:.1f}" '
                        f'height="{ax.py(0.0) - y:.1f}" fill="{PALETTE[bi % len(PALETTE)]}"/>')
        body.append(f'<text x="{x0 + width / 2:.1f}" y="{H - BOTTOM + 18}" text-anchor="middle" font-size="9">{escape(g)}</text>')
    body.extend(_legend(list(bars)))
    return _document(body)
