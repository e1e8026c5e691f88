"""Static SVG figures: importance bars and ALE curves.

Output is plain SVG 1.1 built from strings with fixed-precision coordinates,
so the same input always yields the same bytes.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .explain import AleCurve, BinaryAle, ImportanceReport

RESPONSE_LABEL = "ALE of online purchases"

_FONT = 'font-family="sans-serif" font-size="12"'


def _n(v: float) -> str:
    """Coordinate formatting: two decimals, no negative zero."""
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _open(width: int, height: int) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]


def _text(x: float, y: float, s: str, anchor: str = "start", extra: str = "") -> str:
    return (f'<text x="{_n(x)}" y="{_n(y)}" text-anchor="{anchor}" {_FONT}{extra}>'
            f"{escape(s)}</text>")


def _fmt_tick(v: float) -> str:
    s = f"{v:.3g}"
    return "0" if s in ("-0", "0", "-0.0") else s


def render_importance_svg(report: ImportanceReport, feature_names: list[str] | None = None,
                          title: str = "Importance of input variables") -> str:
    """Horizontal bars of mean |phi|, largest at the top."""
    d = report.mean_abs.size
    names = feature_names or [f"x{j}" for j in range(d)]
    order = report.ranking
    label_w, bar_w, row_h, top = 260, 360, 22, 40
    width, height = label_w + bar_w + 80, top + row_h * d + 30
    vmax = float(np.max(report.mean_abs)) if d else 0.0
    scale = bar_w / vmax if vmax > 0 else 0.0

    out = _open(width, height)
    out.append(_text(width / 2, 22, title, "middle", ' font-weight="bold"'))
    for row, j in enumerate(order):
        y = top + row * row_h
        v = float(report.mean_abs[j])
        out.append(_text(label_w - 8, y + 15, names[j], "end"))
        out.append(f'<rect x="{label_w}" y="{_n(y + 3)}" width="{_n(v * scale)}" '
                   f'height="{row_h - 6}" fill="#4a7ab5"/>')
        out.append(_text(label_w + v * scale + 6, y + 15, f"{v:.4g}"))
    axis_y = top + row_h * d + 4
    out.append(f'<line x1="{label_w}" y1="{top}" x2="{label_w}" y2="{axis_y}" stroke="black"/>')
    out.append(_text(label_w + bar_w / 2, axis_y + 20, "mean |Shapley value|", "middle"))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _axes(out: list[str], x0, y0, pw, ph, xlabel: str, ylo: float, yhi: float) -> None:
    out.append(f'<line x1="{x0}" y1="{y0 + ph}" x2="{x0 + pw}" y2="{y0 + ph}" stroke="black"/>')
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y0 + ph}" stroke="black"/>')
    for frac in (0.0, 0.5, 1.0):
        v = ylo + frac * (yhi - ylo)
        y = y0 + ph - frac * ph
        out.append(f'<line x1="{x0 - 4}" y1="{_n(y)}" x2="{x0}" y2="{_n(y)}" stroke="black"/>')
        out.append(_text(x0 - 6, y + 4, _fmt_tick(v), "end"))
    out.append(_text(x0 + pw / 2, y0 + ph + 40, xlabel, "middle"))
    out.append(_text(16, y0 + ph / 2, RESPONSE_LABEL, "middle",
                     f' transform="rotate(-90 16 {_n(y0 + ph / 2)})"'))


def _y_range(values: np.ndarray) -> tuple[float, float]:
    lo, hi = float(min(values.min(), 0.0)), float(max(values.max(), 0.0))
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    return lo, hi


def render_ale_svg(curve: AleCurve | BinaryAle, feature_name: str | None = None) -> str:
    """Line plot of a centered ALE curve, or two bars for a binary feature."""
    name = feature_name if feature_name is not None else f"x{curve.feature}"
    width, height = 560, 360
    x0, y0, pw, ph = 70, 30, 460, 260
    out = _open(width, height)

    if isinstance(curve, BinaryAle):
        vals = np.array(curve.levels)
        lo, hi = _y_range(vals)
        _axes(out, x0, y0, pw, ph, name, lo, hi)

        def ypos(v):
            return y0 + ph - (v - lo) / (hi - lo) * ph

        zero = ypos(0.0)
        bar = pw / 5
        for i, v in enumerate(vals):
            cx = x0 + pw * (0.3 + 0.4 * i)
            top, bottom = min(ypos(v), zero), max(ypos(v), zero)
            out.append(f'<rect x="{_n(cx - bar / 2)}" y="{_n(top)}" width="{_n(bar)}" '
                       f'height="{_n(bottom - top)}" fill="#4a7ab5"/>')
            out.append(_text(cx, y0 + ph + 18, str(i), "middle"))
            out.append(_text(cx, top - 6, f"{v:.4g}", "middle"))
        out.append(f'<line x1="{x0}" y1="{_n(zero)}" x2="{x0 + pw}" y2="{_n(zero)}" '
                   'stroke="gray" stroke-dasharray="4 3"/>')
    else:
        xs, ys = np.asarray(curve.edges, float), np.asarray(curve.centered, float)
        lo, hi = _y_range(ys)
        _axes(out, x0, y0, pw, ph, name, lo, hi)
        xlo, xhi = float(xs[0]), float(xs[-1])
        xspan = xhi - xlo if xhi > xlo else 1.0

        def ypos(v):
            return y0 + ph - (v - lo) / (hi - lo) * ph

        px = x0 + (xs - xlo) / xspan * pw
        py = [ypos(v) for v in ys]
        points = " ".join(f"{_n(a)},{_n(b)}" for a, b in zip(px, py))
        out.append(f'<polyline points="{points}" fill="none" stroke="#4a7ab5" stroke-width="2"/>')
        for frac, v in ((0.0, xlo), (1.0, xhi)):
            out.append(_text(x0 + frac * pw, y0 + ph + 18, _fmt_tick(v), "middle"))
    out.append("</svg>")
    return "\n".join(out) + "\n"
