"""Dependency-free SVG scatter plots for two-dimensional runs.

Writes a row-major grid of square panels with a shared coordinate range,
one circle per sample.  Kept deliberately small: titles, a per-group
legend, frames, and points; no axes ticks.
"""

from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .errors import ValidationError

__all__ = ["ScatterPanel", "render_scatter_svg", "PALETTE"]

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
)


@dataclass(frozen=True)
class ScatterPanel:
    """One panel: a title and labelled point groups of shape (n, 2)."""

    title: str
    groups: tuple  # of (label, points) or (label, points, color)

    def normalized_groups(self):
        """Groups as ``(label, (n, 2) array, color)`` with palette defaults."""
        out = []
        for i, group in enumerate(self.groups):
            if len(group) == 2:
                label, points = group
                color = PALETTE[i % len(PALETTE)]
            else:
                label, points, color = group
            points = np.asarray(points, dtype=np.float64)
            if points.ndim != 2 or points.shape[1] != 2:
                raise ValidationError(
                    f"panel {self.title!r} group {label!r}: points must have shape (n, 2)"
                )
            out.append((str(label), points, color))
        return out


def render_scatter_svg(panels, path, panel_size=260, cols=0, point_radius=1.6,
                       max_points=4000):
    """Write the panels to ``path``; returns the path.

    All panels share one symmetric square data range so shapes are
    visually comparable.  Groups larger than ``max_points`` are thinned
    deterministically (every k-th point).
    """
    panels = list(panels)
    if not panels:
        raise ValidationError("need at least one panel")
    normalized = [p.normalized_groups() for p in panels]
    extent = 0.0
    for groups in normalized:
        for _, points, _ in groups:
            if points.size:
                extent = max(extent, float(np.abs(points).max()))
    extent = extent * 1.08 if extent > 0 else 1.0
    cols = cols if cols > 0 else min(len(panels), 3)
    rows = (len(panels) + cols - 1) // cols
    margin = 14
    title_h = 20
    cell_w = panel_size + margin
    cell_h = panel_size + title_h + margin
    width = cols * cell_w + margin
    height = rows * cell_h + margin

    def to_px(points, x0, y0):
        scale = panel_size / (2.0 * extent)
        xs = x0 + (points[:, 0] + extent) * scale
        ys = y0 + (extent - points[:, 1]) * scale
        return xs, ys

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for idx, (panel, groups) in enumerate(zip(panels, normalized)):
        col = idx % cols
        row = idx // cols
        x0 = margin + col * cell_w
        y0 = margin + row * cell_h + title_h
        parts.append(f'<text x="{x0}" y="{y0 - 6}" font-family="sans-serif" '
                     f'font-size="13" fill="#222">{escape(panel.title)}</text>')
        parts.append(f'<rect x="{x0}" y="{y0}" width="{panel_size}" height="{panel_size}" '
                     f'fill="none" stroke="#999" stroke-width="1"/>')
        legend_y = y0 + 14
        for label, points, color in groups:
            if points.shape[0] > max_points:
                step = int(np.ceil(points.shape[0] / max_points))
                points = points[::step]
            xs, ys = to_px(points, x0, y0)
            dots = "".join(
                f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{point_radius}" '
                f'fill="{color}" fill-opacity="0.55"/>'
                for x, y in zip(xs, ys)
            )
            parts.append(f"<g>{dots}</g>")
            parts.append(f'<text x="{x0 + 6}" y="{legend_y}" font-family="sans-serif" '
                         f'font-size="11" fill="{color}">{escape(label)}</text>')
            legend_y += 13
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))
    return path
