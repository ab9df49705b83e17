"""Standalone SVG rendering of relevance heatmaps.

The series is drawn as a line plot over a per-time-point color band
(white to red). Colors are min-max normalized per sample; the legend
states which normalization ran. Change ranges from a perturbation
sidecar are drawn as translucent blue rectangles.
"""

from xml.sax.saxutils import escape

import numpy as np

WIDTH = 900
HEIGHT = 300
MARGIN = 40


def _color(intensity, signed_value=None):
    """White -> red ramp; signed mode maps negatives to blue instead."""
    i = float(np.clip(intensity, 0.0, 1.0))
    level = int(round(255 * (1.0 - i)))
    if signed_value is not None and signed_value < 0:
        return f"rgb({level},{level},255)"
    return f"rgb(255,{level},{level})"


def render_heatmap_svg(series, relevance, changed_ranges=None, mode="abs", title=""):
    """Return the SVG document as a string."""
    t = np.asarray(series, dtype=np.float64)
    r = np.asarray(relevance, dtype=np.float64)
    if t.shape != r.shape:
        raise ValueError(
            f"series length {t.size} does not match relevance length {r.size}"
        )
    m = t.size
    plot_w = WIDTH - 2 * MARGIN
    plot_h = HEIGHT - 2 * MARGIN
    band_w = plot_w / m

    scale = np.abs(r) if mode == "abs" else r
    lo, hi = scale.min(), scale.max()
    span = hi - lo
    intensity = np.zeros(m) if span == 0 else (scale - lo) / span

    tmin, tmax = t.min(), t.max()
    tspan = tmax - tmin if tmax > tmin else 1.0

    def sx(i):
        return MARGIN + (i + 0.5) * band_w

    def sy(v):
        return MARGIN + plot_h * (1.0 - (v - tmin) / tspan)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    for i in range(m):
        signed = r[i] if mode == "signed" else None
        parts.append(
            f'<rect x="{MARGIN + i * band_w:.2f}" y="{MARGIN}" '
            f'width="{band_w:.2f}" height="{plot_h}" '
            f'fill="{_color(intensity[i], signed)}"/>'
        )
    for start, end in changed_ranges or []:
        parts.append(
            f'<rect x="{MARGIN + start * band_w:.2f}" y="{MARGIN}" '
            f'width="{(end - start) * band_w:.2f}" height="{plot_h}" '
            f'fill="rgb(60,90,220)" fill-opacity="0.30" '
            f'stroke="rgb(40,60,180)" stroke-width="1"/>'
        )
    points = " ".join(f"{sx(i):.2f},{sy(t[i]):.2f}" for i in range(m))
    parts.append(
        f'<polyline points="{points}" fill="none" stroke="black" stroke-width="1.5"/>'
    )
    legend = (
        f"relevance scale: per-sample min-max over "
        f"{'|r|' if mode == 'abs' else 'signed r'}"
    )
    if title:
        parts.append(
            f'<text x="{MARGIN}" y="{MARGIN - 16}" font-size="14" '
            f'font-family="sans-serif">{escape(title)}</text>'
        )
    parts.append(
        f'<text x="{MARGIN}" y="{HEIGHT - 10}" font-size="12" '
        f'font-family="sans-serif">{escape(legend)}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
