"""Raster containers and elementary grid operators shared by all modules.

Conventions: the world frame is meters with x to the right and y up. A cell
index is a ``(col, row)`` pair, world x maps to columns and world y to rows.
``origin`` is the world position of the *center* of cell (0, 0). Arrays are
stored row-major with shape ``(height, width[, channels])`` and indexed
``values[row, col]``.

All operators are pure functions over effectively-immutable values; nothing
here mutates its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np


class CellState(IntEnum):
    FREE = 0
    OBSTACLE = 1
    UNKNOWN = 2


@dataclass(frozen=True)
class GridGeometry:
    """Raster shape plus the world transform (meters per cell, origin)."""

    width: int
    height: int
    resolution: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must be at least 1x1")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        object.__setattr__(
            self, "origin", (float(self.origin[0]), float(self.origin[1]))
        )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def x_coords(self) -> np.ndarray:
        """World x of every column's cell centers."""
        return self.origin[0] + self.resolution * np.arange(self.width)

    def y_coords(self) -> np.ndarray:
        return self.origin[1] + self.resolution * np.arange(self.height)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) meshgrids of cell-center world coordinates, shape (H, W)."""
        return np.meshgrid(self.x_coords(), self.y_coords())


def world_to_cell(g: GridGeometry, p) -> tuple[int, int] | None:
    """Cell whose center is nearest to world point ``p``, or None if the
    point falls outside the raster extent. Out-of-bounds is a value, not
    an error."""
    x, y = float(p[0]), float(p[1])
    col = int(np.floor((x - g.origin[0]) / g.resolution + 0.5))
    row = int(np.floor((y - g.origin[1]) / g.resolution + 0.5))
    if 0 <= col < g.width and 0 <= row < g.height:
        return (col, row)
    return None


def cell_to_world(g: GridGeometry, cell) -> np.ndarray:
    """World coordinates of the center of ``cell`` = (col, row)."""
    col, row = cell
    return np.array(
        [g.origin[0] + col * g.resolution, g.origin[1] + row * g.resolution]
    )


def _check_values(geometry, values, channels):
    values = np.asarray(values, dtype=np.float64)
    expected = (geometry.height, geometry.width) + (
        (channels,) if channels > 1 else ()
    )
    if values.shape != expected:
        raise ValueError(f"values shape {values.shape} != geometry {expected}")
    return values


@dataclass
class ScalarGrid:
    """One real value per cell (distance maps, EDTs, BEV channels).

    Values may be +inf (unreachable-distance sentinel) but never NaN/-inf.
    """

    geometry: GridGeometry
    values: np.ndarray

    def __post_init__(self):
        self.values = _check_values(self.geometry, self.values, 1)
        if np.isnan(self.values).any() or np.isneginf(self.values).any():
            raise ValueError("scalar grid values must not be NaN or -inf")


@dataclass
class OccupancyGrid:
    """Per-cell state in {Free, Obstacle, Unknown}."""

    geometry: GridGeometry
    states: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states)
        if states.shape != self.geometry.shape:
            raise ValueError("state array shape does not match geometry")
        if not np.isin(states, [0, 1, 2]).all():
            raise ValueError("cell states must be Free=0, Obstacle=1 or Unknown=2")
        self.states = states.astype(np.uint8)

    def free_mask(self) -> np.ndarray:
        return self.states == CellState.FREE


@dataclass
class OrField:
    """Orientation vector n = (nx, ny) per cell with ||n|| in [0, 1]."""

    geometry: GridGeometry
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = _check_values(self.geometry, self.vectors, 2)
        if not np.isfinite(self.vectors).all():
            raise ValueError("orientation components must be finite")
        norms = np.linalg.norm(self.vectors, axis=-1)
        if norms.max(initial=0.0) > 1.0 + 1e-9:
            raise ValueError("orientation norms must not exceed 1")

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.vectors, axis=-1)

    def angles(self) -> np.ndarray:
        """atan2(ny, nx) per cell; 0 on zero vectors."""
        return np.arctan2(self.vectors[..., 1], self.vectors[..., 0])


@dataclass
class BevGrid:
    """Point-cloud rasterization: average intensity, max height, point count."""

    geometry: GridGeometry
    channels: np.ndarray

    def __post_init__(self):
        self.channels = _check_values(self.geometry, self.channels, 3)
        if not np.isfinite(self.channels).all():
            raise ValueError("BEV channels must be finite")
        counts = self.channels[..., 2]
        if (counts < 0).any():
            raise ValueError("point counts must be non-negative")
        empty = counts == 0
        if self.channels[..., 0][empty].any() or self.channels[..., 1][empty].any():
            raise ValueError("empty cells must have zero intensity and height")


def rasterize_points(points, g: GridGeometry) -> BevGrid:
    """Bin (x, y, z, intensity) points into a BEV grid.

    Per cell: mean intensity, max z and point count; cells without points
    are (0, 0, 0). Points outside the raster extent are dropped.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 4)
    if pts.size and not np.isfinite(pts).all():
        raise ValueError("point coordinates must be finite")
    ch = np.zeros((g.height, g.width, 3))
    if pts.size == 0:
        return BevGrid(g, ch)
    cols = np.floor((pts[:, 0] - g.origin[0]) / g.resolution + 0.5).astype(int)
    rows = np.floor((pts[:, 1] - g.origin[1]) / g.resolution + 0.5).astype(int)
    inside = (cols >= 0) & (cols < g.width) & (rows >= 0) & (rows < g.height)
    cols, rows, pts = cols[inside], rows[inside], pts[inside]
    if pts.size == 0:
        return BevGrid(g, ch)
    flat = rows * g.width + cols
    n = g.height * g.width
    count = np.bincount(flat, minlength=n).astype(np.float64)
    isum = np.bincount(flat, weights=pts[:, 3], minlength=n)
    zmax = np.full(n, -np.inf)
    np.maximum.at(zmax, flat, pts[:, 2])
    occupied = count > 0
    mean = np.zeros(n)
    mean[occupied] = isum[occupied] / count[occupied]
    height = np.where(occupied, zmax, 0.0)
    ch[..., 0] = mean.reshape(g.shape)
    ch[..., 1] = height.reshape(g.shape)
    ch[..., 2] = count.reshape(g.shape)
    return BevGrid(g, ch)


def supercover_cells(g: GridGeometry, a, b) -> np.ndarray:
    """All cells whose (closed) area the segment a->b touches, ordered from
    a to b. Unlike Bresenham rasterization this includes cells grazed at a
    corner, so edge-cost accumulation never skips a cell.

    Returns an (N, 2) int array of (col, row) indices. Raises ValueError if
    either endpoint lies outside the raster extent.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ca, cb = world_to_cell(g, a), world_to_cell(g, b)
    if ca is None or cb is None:
        raise ValueError("segment endpoint outside the raster extent")
    if np.array_equal(a, b):
        return np.array([ca], dtype=np.intp)

    res = g.resolution
    half = res / 2.0
    ox, oy = g.origin
    # Candidate bounding box, padded one cell to catch boundary grazes.
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    c0 = np.floor((lo - (ox, oy)) / res + 0.5).astype(int) - 1
    c1 = np.floor((hi - (ox, oy)) / res + 0.5).astype(int) + 1
    cols = np.arange(max(c0[0], 0), min(c1[0], g.width - 1) + 1)
    rows = np.arange(max(c0[1], 0), min(c1[1], g.height - 1) + 1)
    cx = ox + cols * res
    cy = oy + rows * res

    d = b - a
    eps = 1e-12

    def axis_window(centers, a0, d0):
        # Parameter interval where the segment is within [c-half, c+half].
        if d0 == 0.0:
            inside = np.abs(a0 - centers) <= half + eps * res
            t0 = np.where(inside, -np.inf, np.inf)
            t1 = np.where(inside, np.inf, -np.inf)
        else:
            t0 = (centers - half - a0) / d0
            t1 = (centers + half - a0) / d0
            t0, t1 = np.minimum(t0, t1), np.maximum(t0, t1)
        return t0, t1

    tx0, tx1 = axis_window(cx, a[0], d[0])
    ty0, ty1 = axis_window(cy, a[1], d[1])
    enter = np.maximum(np.maximum(tx0[None, :], ty0[:, None]), 0.0)
    exit_ = np.minimum(np.minimum(tx1[None, :], ty1[:, None]), 1.0)
    hit = enter <= exit_ + eps

    rr, cc = np.nonzero(hit)
    t_enter = enter[rr, cc]
    # Secondary key: cell-center projection along the travel direction,
    # so cells tied at one entry time still come out in travel order.
    proj = (cx[cc] - a[0]) * d[0] + (cy[rr] - a[1]) * d[1]
    order = np.lexsort((proj, t_enter))
    return np.column_stack([cols[cc][order], rows[rr][order]]).astype(np.intp)


def uniform_filter(f: OrField, radius: int) -> OrField:
    """Box-average each orientation vector over the (2r+1)^2 neighborhood.

    The window shrinks at the borders instead of padding, so no orientation
    is invented outside the map. Averaging can only shorten vectors where
    neighbors disagree; a uniform field passes through unchanged.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return OrField(f.geometry, f.vectors.copy())
    h, w = f.geometry.shape
    ii = np.zeros((h + 1, w + 1, 2))
    ii[1:, 1:] = f.vectors.cumsum(axis=0).cumsum(axis=1)
    rows = np.arange(h)
    cols = np.arange(w)
    r0 = np.clip(rows - radius, 0, None)
    r1 = np.clip(rows + radius, None, h - 1)
    c0 = np.clip(cols - radius, 0, None)
    c1 = np.clip(cols + radius, None, w - 1)
    total = (
        ii[r1 + 1][:, c1 + 1]
        - ii[r0][:, c1 + 1]
        - ii[r1 + 1][:, c0]
        + ii[r0][:, c0]
    )
    counts = (r1 - r0 + 1)[:, None] * (c1 - c0 + 1)[None, :]
    out = total / counts[..., None]
    # Summed-area roundoff can push a unit norm a few ulp over 1.
    norms = np.linalg.norm(out, axis=-1, keepdims=True)
    over = norms > 1.0
    if over.any():
        np.divide(out, norms, out=out, where=over & (norms > 0))
    return OrField(f.geometry, out)


# --- OFG1 file format -------------------------------------------------------
#
# ASCII header ("OFG1", kind, width, height, resolution, origin, channels),
# a blank line, then row-major little-endian float32 payload with `channels`
# values per cell. Occupancy encodes Free=0.0, Obstacle=1.0, Unknown=2.0.

_KIND_CHANNELS = {"scalar": 1, "orfield": 2, "occupancy": 1, "bev": 3}


def _grid_kind(grid) -> str:
    if isinstance(grid, ScalarGrid):
        return "scalar"
    if isinstance(grid, OrField):
        return "orfield"
    if isinstance(grid, OccupancyGrid):
        return "occupancy"
    if isinstance(grid, BevGrid):
        return "bev"
    raise TypeError(f"not a grid type: {type(grid)!r}")


def save_ofg(path, grid) -> None:
    """Write any of the four grid types in the OFG1 format."""
    kind = _grid_kind(grid)
    g = grid.geometry
    if kind == "scalar":
        payload = grid.values[..., None]
    elif kind == "orfield":
        payload = grid.vectors
    elif kind == "occupancy":
        payload = grid.states[..., None].astype(np.float64)
    else:
        payload = grid.channels
    header = (
        f"OFG1\n"
        f"kind {kind}\n"
        f"width {g.width}\n"
        f"height {g.height}\n"
        f"resolution {g.resolution!r}\n"
        f"origin {g.origin[0]!r} {g.origin[1]!r}\n"
        f"channels {_KIND_CHANNELS[kind]}\n"
        f"\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(payload, dtype="<f4").tobytes())


def load_ofg(path):
    """Read an OFG1 file back into the matching grid type."""
    raw = Path(path).read_bytes()
    sep = raw.find(b"\n\n")
    if sep < 0:
        raise ValueError("OFG1: missing blank line after header")
    lines = raw[:sep].decode("ascii").splitlines()
    if not lines or lines[0] != "OFG1":
        raise ValueError("OFG1: bad magic")
    fields = {}
    for line in lines[1:]:
        key, _, rest = line.partition(" ")
        fields[key] = rest
    try:
        kind = fields["kind"]
        width = int(fields["width"])
        height = int(fields["height"])
        resolution = float(fields["resolution"])
        origin = tuple(float(v) for v in fields["origin"].split())
        channels = int(fields["channels"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"OFG1: malformed header: {exc}") from exc
    if kind not in _KIND_CHANNELS:
        raise ValueError(f"OFG1: unknown kind {kind!r}")
    if channels != _KIND_CHANNELS[kind]:
        raise ValueError(f"OFG1: kind {kind} requires {_KIND_CHANNELS[kind]} channels")
    g = GridGeometry(width, height, resolution, origin)
    data = np.frombuffer(raw[sep + 2 :], dtype="<f4")
    if data.size != width * height * channels:
        raise ValueError("OFG1: payload size does not match header")
    data = data.astype(np.float64).reshape(height, width, channels)
    if kind == "scalar":
        return ScalarGrid(g, data[..., 0])
    if kind == "orfield":
        return OrField(g, data)
    if kind == "bev":
        return BevGrid(g, data)
    states = data[..., 0]
    if not np.isin(states, [0.0, 1.0, 2.0]).all():
        raise ValueError("OFG1: occupancy payload must encode 0.0/1.0/2.0")
    return OccupancyGrid(g, states.astype(np.uint8))
