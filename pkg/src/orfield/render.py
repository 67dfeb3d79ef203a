"""Layered SVG rendering of occupancy, orientation fields and trajectories.

Output is plain deterministic text: same inputs, same bytes. World
coordinates map to SVG with y flipped; all sizes are in meters.
"""

from __future__ import annotations

import colorsys

import numpy as np

from .grid import CellState, OccupancyGrid, OrField

_OCC_COLORS = {
    int(CellState.FREE): "#ffffff",
    int(CellState.OBSTACLE): "#3a3a3a",
    int(CellState.UNKNOWN): "#bdbdbd",
}

_TRAJ_PALETTE = ("#d81b60", "#1e88e5", "#43a047", "#fb8c00", "#8e24aa")


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def _hue_color(angle: float, norm: float) -> str:
    hue = (angle + np.pi) / (2.0 * np.pi)
    r, g, b = colorsys.hsv_to_rgb(hue % 1.0, 0.85, 0.35 + 0.65 * min(norm, 1.0))
    return f"#{int(r * 255):02x}{int(g * 255):02x}{int(b * 255):02x}"


def render_svg(
    occupancy: OccupancyGrid | None = None,
    field: OrField | None = None,
    trajectories=(),
    arrow_stride: int = 8,
) -> str:
    """Compose an SVG of any subset of layers. All raster layers must share
    one geometry; ``arrow_stride`` subsamples the field's arrow glyphs and
    must be positive (0 disables nothing, it is a flag error)."""
    if arrow_stride <= 0:
        raise ValueError("arrow_stride must be >= 1")
    grids = [x for x in (occupancy, field) if x is not None]
    trajectories = list(trajectories)
    if not grids and not trajectories:
        raise ValueError("nothing to render")
    g = grids[0].geometry if grids else None
    for grid in grids[1:]:
        if grid.geometry != g:
            raise ValueError("render layers must share one geometry")

    if g is not None:
        res = g.resolution
        xmin = g.origin[0] - res / 2
        ymax = g.origin[1] + (g.height - 1) * res + res / 2
        width = g.width * res
        height = g.height * res
    else:
        pts = np.vstack([t.positions for t in trajectories])
        pad = 1.0
        xmin = pts[:, 0].min() - pad
        ymax = pts[:, 1].max() + pad
        width = pts[:, 0].max() + pad - xmin
        height = ymax - (pts[:, 1].min() - pad)
        res = None

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{_fmt(xmin)} '
        f'{_fmt(-ymax)} {_fmt(width)} {_fmt(height)}">',
        f'<rect x="{_fmt(xmin)}" y="{_fmt(-ymax)}" width="{_fmt(width)}" '
        f'height="{_fmt(height)}" fill="#ffffff"/>',
    ]

    def cell_rect(col, row, color):
        x = g.origin[0] + col * res - res / 2
        y = g.origin[1] + row * res + res / 2
        return (
            f'<rect x="{_fmt(x)}" y="{_fmt(-y)}" width="{_fmt(res)}" '
            f'height="{_fmt(res)}" fill="{color}"/>'
        )

    if occupancy is not None:
        parts.append('<g id="occupancy">')
        for row in range(g.height):
            for col in range(g.width):
                state = int(occupancy.states[row, col])
                if state != CellState.FREE:
                    parts.append(cell_rect(col, row, _OCC_COLORS[state]))
        parts.append("</g>")

    if field is not None:
        angles = field.angles()
        norms = field.norms()
        parts.append('<g id="field" opacity="0.75">')
        for row in range(g.height):
            for col in range(g.width):
                if norms[row, col] > 0:
                    parts.append(
                        cell_rect(col, row, _hue_color(angles[row, col], norms[row, col]))
                    )
        parts.append("</g>")
        parts.append(f'<g id="arrows" stroke="#111111" stroke-width="{_fmt(res * 0.12)}">')
        glyph = 0.4 * res * arrow_stride
        for row in range(0, g.height, arrow_stride):
            for col in range(0, g.width, arrow_stride):
                n = norms[row, col]
                if n == 0:
                    continue
                cx = g.origin[0] + col * res
                cy = g.origin[1] + row * res
                dx = glyph * n * np.cos(angles[row, col])
                dy = glyph * n * np.sin(angles[row, col])
                parts.append(
                    f'<line x1="{_fmt(cx - dx)}" y1="{_fmt(-(cy - dy))}" '
                    f'x2="{_fmt(cx + dx)}" y2="{_fmt(-(cy + dy))}"/>'
                )
        parts.append("</g>")

    for i, traj in enumerate(trajectories):
        color = _TRAJ_PALETTE[i % len(_TRAJ_PALETTE)]
        coords = " ".join(
            f"{_fmt(x)},{_fmt(-y)}" for x, y in traj.positions
        )
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="0.25" stroke-linejoin="round"/>'
        )

    parts.append("</svg>")
    return "\n".join(parts) + "\n"
