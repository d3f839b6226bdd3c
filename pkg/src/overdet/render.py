"""SVG plots of line fields: unoriented ticks, boundary polyline, annotated singularities."""
from __future__ import annotations

from fractions import Fraction

import numpy as np

MINUS = "−"


def format_index(v):
    """Half-integer index as text, e.g. -0.5 -> '-1/2' with a typographic minus."""
    if v is None or not np.isfinite(v):
        return "?"
    f = Fraction(round(2 * v), 2) if abs(2 * v - round(2 * v)) < 1e-9 else None
    if f is None:
        return f"{v:.3f}".replace("-", MINUS)
    txt = str(abs(f.numerator)) if f.denominator == 1 else f"{abs(f.numerator)}/{f.denominator}"
    return (MINUS if f < 0 else "") + txt


class _Frame:
    def __init__(self, lo, hi, size=600, pad=30):
        span = max(hi[0] - lo[0], hi[1] - lo[1], 1e-12)
        self.lo, self.scale, self.pad, self.size = lo, (size - 2 * pad) / span, pad, size
        self.height = int(round(2 * pad + (hi[1] - lo[1]) * self.scale))
        self.width = int(round(2 * pad + (hi[0] - lo[0]) * self.scale))

    def __call__(self, x, y):
        px = self.pad + (np.asarray(x) - self.lo[0]) * self.scale
        py = self.height - self.pad - (np.asarray(y) - self.lo[1]) * self.scale
        return px, py


def _f(v):
    return f"{v:.2f}"


def render_svg(lf, curve=None, singularities=(), title="", tick=None):
    """SVG text for a LineField with optional boundary and singularity markers.

    ``singularities`` are dicts with x, y, index; entries with x None sit at
    infinity and are drawn in the top-right corner.
    """
    pts = np.column_stack([lf.x, lf.y])
    allp = pts if curve is None else np.vstack([pts, curve.points])
    lo, hi = allp.min(0), allp.max(0)
    fr = _Frame(lo, hi)
    if tick is None:
        xs = np.unique(np.round(lf.x, 12))
        spacing = np.min(np.diff(xs)) if len(xs) > 1 else max(hi - lo) / 10 or 1.0
        tick = 0.8 * spacing
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{fr.width}" height="{fr.height + 40}" '
        f'viewBox="0 0 {fr.width} {fr.height + 40}">',
        f'<rect x="0" y="0" width="{fr.width}" height="{fr.height + 40}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{fr.pad}" y="18" font-family="sans-serif" font-size="13">{title}</text>')
    out.append('<g id="ticks" stroke="#335" stroke-width="1" stroke-linecap="round">')
    half = 0.5 * tick
    for x, y, th, ok in zip(lf.x, lf.y, lf.theta, lf.valid):
        if not ok:
            continue
        dx, dy = half * np.cos(th), half * np.sin(th)
        (x1, x2), (y1, y2) = fr([x - dx, x + dx], [y - dy, y + dy])
        out.append(f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}"/>')
    out.append("</g>")
    if curve is not None:
        px, py = fr(curve.points[:, 0], curve.points[:, 1])
        path = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(px, py))
        out.append(f'<polyline id="boundary" fill="none" stroke="#c33" stroke-width="2" points="{path}"/>')
    out.append('<g id="singularities" font-family="sans-serif" font-size="14">')
    total = 0.0
    for k, s in enumerate(singularities):
        idx = s.get("index")
        total += idx if idx is not None else np.nan
        if s.get("x") is None:
            cx, cy = fr.width - fr.pad - 10, fr.pad + 10 + 24 * k
            label = f"∞: {format_index(idx)}"
        else:
            cx, cy = fr(s["x"], s["y"])
            label = format_index(idx)
        out.append(f'<circle class="marker" cx="{_f(cx)}" cy="{_f(cy)}" r="6" fill="none" stroke="#093" stroke-width="2"/>')
        out.append(f'<text x="{_f(cx + 9)}" y="{_f(cy - 9)}" fill="#093">{label}</text>')
    out.append("</g>")
    if singularities:
        out.append(
            f'<text id="legend" x="{fr.pad}" y="{fr.height + 25}" font-family="sans-serif" font-size="13">'
            f"index sum: {format_index(total)}</text>"
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
