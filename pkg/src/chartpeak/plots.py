"""Self-contained SVG charts: importance bars and a correlation heatmap.

Output is plain SVG text with fixed number formatting, so identical inputs
give byte-identical files.
"""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

FONT = 'font-family="Helvetica, Arial, sans-serif"'


def _svg_open(width: float, height: float, title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}" role="img">',
        f"<title>{escape(title)}</title>",
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="15" {FONT}>{escape(title)}</text>',
    ]


def importance_bar_svg(importances: Sequence[tuple[str, float]], title: str = "Feature importance",
                       bar_height: int = 22, width: int = 640) -> str:
    """Horizontal bars, one per feature, in the order given (pass them sorted)."""
    label_w, pad, top = 150, 60, 40
    plot_w = width - label_w - pad
    height = top + bar_height * max(len(importances), 1) + 30
    peak = max((v for _, v in importances), default=0.0) or 1.0
    out = _svg_open(width, height, title)
    for i, (name, value) in enumerate(importances):
        y = top + i * bar_height
        w = plot_w * max(value, 0.0) / peak
        out.append(
            f'<text x="{label_w - 6}" y="{y + bar_height * 0.68:.1f}" text-anchor="end" '
            f'font-size="12" {FONT}>{escape(name)}</text>'
        )
        out.append(
            f'<rect class="bar" x="{label_w}" y="{y + 3}" width="{w:.2f}" height="{bar_height - 6}" '
            f'fill="#3b6ea8"><title>{escape(name)}: {value:.4f}</title></rect>'
        )
        out.append(
            f'<text x="{label_w + w + 4:.2f}" y="{y + bar_height * 0.68:.1f}" font-size="11" '
            f'{FONT}>{value:.3f}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def diverging_color(r: float) -> str:
    """Blue for -1, white for 0, red for +1."""
    r = float(np.clip(r, -1.0, 1.0))
    if r >= 0:
        rgb = (255, round(255 * (1 - r * 0.85)), round(255 * (1 - r * 0.85)))
    else:
        rgb = (round(255 * (1 + r * 0.85)), round(255 * (1 + r * 0.6)), 255)
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def correlation_heatmap_svg(names: Sequence[str], matrix: np.ndarray,
                            title: str = "Pairwise correlation", cell: int = 38) -> str:
    """One annotated cell per column pair."""
    matrix = np.asarray(matrix, dtype=np.float64)
    n = len(names)
    if matrix.shape != (n, n):
        raise ValueError(f"matrix shape {matrix.shape} does not match {n} names")
    left, top = 130, 130
    width, height = left + n * cell + 20, top + n * cell + 20
    out = _svg_open(width, height, title)
    for j, name in enumerate(names):
        x = left + j * cell + cell / 2
        out.append(
            f'<text x="{x:.1f}" y="{top - 6}" font-size="11" {FONT} '
            f'transform="rotate(-60 {x:.1f} {top - 6})">{escape(name)}</text>'
        )
    for i, name in enumerate(names):
        y = top + i * cell
        out.append(
            f'<text x="{left - 6}" y="{y + cell * 0.62:.1f}" text-anchor="end" font-size="11" '
            f'{FONT}>{escape(name)}</text>'
        )
        for j in range(n):
            r = matrix[i, j]
            x = left + j * cell
            ink = "white" if abs(r) > 0.6 else "#222"
            out.append(
                f'<rect class="cell" x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{diverging_color(r)}" stroke="#ddd"/>'
            )
            out.append(
                f'<text x="{x + cell / 2:.1f}" y="{y + cell * 0.62:.1f}" text-anchor="middle" '
                f'font-size="10" fill="{ink}" {FONT}>{r:.2f}</text>'
            )
    out.append("</svg>")
    return "\n".join(out) + "\n"
