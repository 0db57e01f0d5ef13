"""Tiny SVG writer: overlaid histograms and line plots with plain axes."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

W, H = 480, 320
LEFT, RIGHT, TOP, BOTTOM = 56, 16, 28, 40
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _frame(title: str, xlo: float, xhi: float, ylo: float, yhi: float, xlabel: str, ylabel: str) -> list[str]:
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>',
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>',
        f'<text x="{LEFT + pw / 2:.1f}" y="{H - 6}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="12" y="{TOP + ph / 2:.1f}" text-anchor="middle" transform="rotate(-90 12 {TOP + ph / 2:.1f})">'
        f"{escape(ylabel)}</text>",
    ]
    for i in range(5):
        fx = xlo + (xhi - xlo) * i / 4
        px = LEFT + pw * i / 4
        out.append(f'<text x="{px:.1f}" y="{TOP + ph + 14}" text-anchor="middle">{fx:.3g}</text>')
        fy = ylo + (yhi - ylo) * i / 4
        py = TOP + ph - ph * i / 4
        out.append(f'<text x="{LEFT - 4}" y="{py + 4:.1f}" text-anchor="end">{fy:.3g}</text>')
    return out


def _range(values) -> tuple[float, float]:
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def histogram_svg(path, groups: dict[str, np.ndarray], title: str = "", xlabel: str = "score",
                  bins: int = 30) -> None:
    """Overlaid, semi-transparent density histograms, one per group."""
    groups = {k: np.asarray(v, dtype=float) for k, v in groups.items() if len(v)}
    allv = np.concatenate(list(groups.values())) if groups else np.zeros(1)
    lo, hi = _range(allv)
    edges = np.linspace(lo, hi, bins + 1)
    dens = {k: np.histogram(v, bins=edges, density=True)[0] for k, v in groups.items()}
    ymax = max([float(d.max()) for d in dens.values()] + [1e-12])
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM
    out = _frame(title, lo, hi, 0.0, ymax, xlabel, "density")
    for j, (name, d) in enumerate(dens.items()):
        col = COLORS[j % len(COLORS)]
        for i, h in enumerate(d):
            if h <= 0:
                continue
            x = LEFT + pw * (edges[i] - lo) / (hi - lo)
            w = pw * (edges[i + 1] - edges[i]) / (hi - lo)
            y = TOP + ph * (1 - h / ymax)
            out.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{TOP + ph - y:.2f}" '
                       f'fill="{col}" fill-opacity="0.45"/>')
        out.append(f'<text x="{LEFT + pw - 4}" y="{TOP + 12 + 14 * j}" text-anchor="end" fill="{col}">'
                   f"{escape(name)}</text>")
    out.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(out) + "\n")


def line_svg(path, x, series: dict[str, np.ndarray], title: str = "", xlabel: str = "", ylabel: str = "") -> None:
    x = np.asarray(x, dtype=float)
    series = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    xlo, xhi = _range(x)
    ylo, yhi = _range(np.concatenate(list(series.values())))
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM
    out = _frame(title, xlo, xhi, ylo, yhi, xlabel, ylabel)
    for j, (name, y) in enumerate(series.items()):
        col = COLORS[j % len(COLORS)]
        px = LEFT + pw * (x - xlo) / (xhi - xlo)
        py = TOP + ph * (1 - (y - ylo) / (yhi - ylo))
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        out.append(f'<text x="{LEFT + pw - 4}" y="{TOP + 12 + 14 * j}" text-anchor="end" fill="{col}">'
                   f"{escape(name)}</text>")
    out.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(out) + "\n")
