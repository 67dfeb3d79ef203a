"""Orientation field construction.

Two families of fields are built here. Route-only fields take their
orientations from the tangents of a smoothed route (or its raw polyline).
Occupancy fields are derived from the free-space geometry: distance
transforms give the direction parallel to the road border, a shortest-path
tree from a target frontier disambiguates its sign, and obstacle cells point
back into free space.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra as csgraph_dijkstra

from .geometry import Route, closest_points_on_chain, route_to_bezier_chain
from .grid import (
    CellState,
    GridGeometry,
    OccupancyGrid,
    OrField,
    ScalarGrid,
    cell_to_world,
    world_to_cell,
)

GRADIENT_EPS = 1e-9

# 8-connected neighborhood: (dcol, drow, step cost in cells).
_NEIGHBORS = [
    (1, 0, 1.0),
    (-1, 0, 1.0),
    (0, 1, 1.0),
    (0, -1, 1.0),
    (1, 1, np.sqrt(2.0)),
    (1, -1, np.sqrt(2.0)),
    (-1, 1, np.sqrt(2.0)),
    (-1, -1, np.sqrt(2.0)),
]


class FieldVariant(str, Enum):
    INITIAL_ORFIELD = "initial"
    NEAREST = "nearest"
    DIJKSTRA = "dijkstra"
    GRADIENT = "gradient"
    DIJKSTRA_FULL = "dijkstra-full"
    GRADIENT_FULL = "gradient-full"


ROUTE_VARIANTS = {FieldVariant.INITIAL_ORFIELD, FieldVariant.NEAREST}


@dataclass(frozen=True)
class Frontier:
    """Maximal run of free border cells with a representative cell."""

    cells: np.ndarray  # (K, 2) int, (col, row)
    representative: tuple[int, int]

    def representative_world(self, g: GridGeometry) -> np.ndarray:
        return cell_to_world(g, self.representative)


@dataclass(frozen=True)
class FrontierSet:
    frontiers: tuple

    def __len__(self):
        return len(self.frontiers)

    def __getitem__(self, i) -> Frontier:
        return self.frontiers[i]

    def nearest(self, g: GridGeometry, point) -> int:
        """Index of the frontier whose representative is closest to ``point``."""
        if not self.frontiers:
            raise ValueError("no frontiers to select from")
        reps = np.stack([f.representative_world(g) for f in self.frontiers])
        return int(np.argmin(((reps - np.asarray(point)) ** 2).sum(axis=1)))


def initial_orfield(route: Route, g: GridGeometry) -> tuple[OrField, ScalarGrid]:
    """Route-tangent field: for every cell, the unit tangent at the closest
    point of the route's Bezier chain, plus the distance map to that point."""
    chain = route_to_bezier_chain(route)
    xs, ys = g.cell_centers()
    queries = np.column_stack([xs.ravel(), ys.ravel()])
    _, _, _, tangents, dists = closest_points_on_chain(chain, queries)
    vectors = tangents.reshape(g.height, g.width, 2)
    distance = dists.reshape(g.height, g.width)
    return OrField(g, vectors), ScalarGrid(g, distance)


def nearest_edge_orfield(route: Route, g: GridGeometry) -> OrField:
    """Per cell, the unit direction of the nearest raw route edge (no
    smoothing); ties go to the lower edge index."""
    wp = route.waypoints
    starts = wp[:-1]
    deltas = np.diff(wp, axis=0)
    lengths_sq = (deltas**2).sum(axis=1)
    xs, ys = g.cell_centers()
    q = np.column_stack([xs.ravel(), ys.ravel()])  # (M, 2)
    # Point-to-segment distance for all cells x edges.
    rel = q[:, None, :] - starts[None, :, :]
    t = (rel * deltas[None, :, :]).sum(axis=2) / lengths_sq[None, :]
    t = np.clip(t, 0.0, 1.0)
    foot = starts[None, :, :] + t[..., None] * deltas[None, :, :]
    d2 = ((q[:, None, :] - foot) ** 2).sum(axis=2)
    best = d2.argmin(axis=1)  # first occurrence = lowest edge index
    dirs = deltas / np.sqrt(lengths_sq)[:, None]
    vectors = dirs[best].reshape(g.height, g.width, 2)
    return OrField(g, vectors)


def edt(occ: OccupancyGrid) -> ScalarGrid:
    """Exact Euclidean distance (meters, center to center) from every cell to
    the nearest non-free cell; zero on non-free cells."""
    free = occ.free_mask()
    if free.all():
        raise ValueError("EDT undefined: grid contains no non-free cell")
    dist = ndimage.distance_transform_edt(free)
    return ScalarGrid(occ.geometry, dist * occ.geometry.resolution)


def inverse_edt(occ: OccupancyGrid) -> ScalarGrid:
    """Distance from every non-free cell to the nearest free cell; zero on
    free cells."""
    nonfree = ~occ.free_mask()
    if nonfree.all():
        raise ValueError("inverse EDT undefined: grid contains no free cell")
    dist = ndimage.distance_transform_edt(nonfree)
    return ScalarGrid(occ.geometry, dist * occ.geometry.resolution)


def gradient_direction(s: ScalarGrid) -> OrField:
    """Unit central-difference gradient of a scalar raster; cells with
    ||grad|| < 1e-9 get the zero vector."""
    if s.geometry.height < 3 or s.geometry.width < 3:
        raise ValueError("gradient needs a grid of at least 3x3")
    gy, gx = np.gradient(s.values, s.geometry.resolution)
    vec = np.stack([gx, gy], axis=-1)
    norms = np.linalg.norm(vec, axis=-1, keepdims=True)
    unit = np.where(norms >= GRADIENT_EPS, vec / np.where(norms > 0, norms, 1.0), 0.0)
    return OrField(s.geometry, unit)


def perpendicular_direction(field: OrField) -> OrField:
    """Rotate every vector +90 degrees (ccw); zero vectors stay zero. The
    resulting direction is parallel to the iso-contours and ambiguous up to
    sign by construction."""
    v = field.vectors
    return OrField(field.geometry, np.stack([-v[..., 1], v[..., 0]], axis=-1))


def find_frontiers(occ: OccupancyGrid, min_length: int = 1) -> FrontierSet:
    """Maximal 8-connected runs of free cells that touch the raster border or
    sit 4-adjacent to unknown space, keeping runs of at least ``min_length``
    cells. The representative is the run cell nearest the run centroid."""
    free = occ.free_mask()
    h, w = occ.geometry.shape
    border = np.zeros((h, w), dtype=bool)
    border[0, :] = border[-1, :] = True
    border[:, 0] = border[:, -1] = True
    unknown = occ.states == CellState.UNKNOWN
    adj_unknown = np.zeros_like(unknown)
    adj_unknown[1:, :] |= unknown[:-1, :]
    adj_unknown[:-1, :] |= unknown[1:, :]
    adj_unknown[:, 1:] |= unknown[:, :-1]
    adj_unknown[:, :-1] |= unknown[:, 1:]
    mask = free & (border | adj_unknown)
    labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    frontiers = []
    for lbl in range(1, count + 1):
        rows, cols = np.nonzero(labels == lbl)
        if len(rows) < min_length:
            continue
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        centroid = (rows.mean(), cols.mean())
        d2 = (rows - centroid[0]) ** 2 + (cols - centroid[1]) ** 2
        rep_i = int(np.argmin(d2))
        frontiers.append(
            Frontier(
                cells=np.column_stack([cols, rows]).astype(np.intp),
                representative=(int(cols[rep_i]), int(rows[rep_i])),
            )
        )
    frontiers.sort(key=lambda f: (f.representative[1], f.representative[0]))
    return FrontierSet(tuple(frontiers))


def dijkstra_field(
    occ: OccupancyGrid, target: tuple[int, int]
) -> tuple[ScalarGrid, OrField]:
    """Shortest 8-connected path cost over free space to the target cell
    (meters, diagonals cost sqrt(2) cells) and, per reachable cell, the unit
    step toward its shortest-path-tree parent. Non-free and unreachable cells
    get +inf cost and the zero vector; the target gets the zero vector."""
    col, row = int(target[0]), int(target[1])
    h, w = occ.geometry.shape
    if not (0 <= col < w and 0 <= row < h):
        raise ValueError("target cell outside the grid")
    free = occ.free_mask()
    if not free[row, col]:
        raise ValueError("target cell is not free")

    ids = np.full((h, w), -1, dtype=np.intp)
    n_free = int(free.sum())
    ids[free] = np.arange(n_free)
    src_list, dst_list, w_list = [], [], []
    for dc, dr, cost in _NEIGHBORS:
        if dc < 0 or (dc == 0 and dr < 0):
            continue  # undirected graph: keep one direction per pair
        rs = slice(max(0, -dr), h - max(0, dr))
        rd = slice(max(0, dr), h + min(0, dr))
        cs = slice(max(0, -dc), w - max(0, dc))
        cd = slice(max(0, dc), w + min(0, dc))
        both = free[rs, cs] & free[rd, cd]
        src_list.append(ids[rs, cs][both])
        dst_list.append(ids[rd, cd][both])
        w_list.append(np.full(int(both.sum()), cost * occ.geometry.resolution))
    if src_list:
        src = np.concatenate(src_list)
        dst = np.concatenate(dst_list)
        wts = np.concatenate(w_list)
    else:
        src = dst = np.empty(0, dtype=np.intp)
        wts = np.empty(0)
    graph = coo_matrix((wts, (src, dst)), shape=(n_free, n_free))
    dist, pred = csgraph_dijkstra(
        graph,
        directed=False,
        indices=ids[row, col],
        return_predecessors=True,
    )

    cost_grid = np.full((h, w), np.inf)
    cost_grid[free] = dist
    vectors = np.zeros((h, w, 2))
    rows_f, cols_f = np.nonzero(free)
    has_parent = pred >= 0
    node_rows = rows_f[has_parent]
    node_cols = cols_f[has_parent]
    parent_ids = pred[has_parent]
    step = np.column_stack(
        [cols_f[parent_ids] - node_cols, rows_f[parent_ids] - node_rows]
    ).astype(np.float64)
    step /= np.linalg.norm(step, axis=1, keepdims=True)
    vectors[node_rows, node_cols] = step
    return ScalarGrid(occ.geometry, cost_grid), OrField(occ.geometry, vectors)


def orientation_label(occ: OccupancyGrid, target: tuple[int, int]) -> OrField:
    """Full orientation label. Free cells carry the border-parallel direction
    (EDT gradient rotated 90 degrees) sign-matched against the Dijkstra tree
    so their dot product is never negative, falling back to the Dijkstra step
    where the border direction vanishes. Non-free cells carry the negative
    inverse-EDT gradient, which points into free space."""
    free = occ.free_mask()
    parallel = perpendicular_direction(gradient_direction(edt(occ))).vectors
    _, dij = dijkstra_field(occ, target)
    dot = (parallel * dij.vectors).sum(axis=-1)
    parallel = np.where((dot < 0)[..., None], -parallel, parallel)
    par_zero = np.linalg.norm(parallel, axis=-1) == 0
    label = np.where((free & ~par_zero)[..., None], parallel, 0.0)
    label = np.where((free & par_zero)[..., None], dij.vectors, label)
    into_free = -gradient_direction(inverse_edt(occ)).vectors
    label = np.where((~free)[..., None], into_free, label)
    return OrField(occ.geometry, label)


def make_field(
    variant: FieldVariant,
    occ: OccupancyGrid,
    route: Route | None = None,
    target: tuple[int, int] | None = None,
) -> OrField:
    """Build any field variant. Route variants need ``route``; occupancy
    variants need ``target``. The partial/full split (Dijkstra vs
    Dijkstra-Full etc.) is purely which occupancy grid the caller supplies.
    ``occ`` always provides the raster geometry."""
    variant = FieldVariant(variant)
    if variant in ROUTE_VARIANTS:
        if route is None:
            raise ValueError(f"variant {variant.value} requires a route")
        if variant is FieldVariant.INITIAL_ORFIELD:
            return initial_orfield(route, occ.geometry)[0]
        return nearest_edge_orfield(route, occ.geometry)
    if target is None:
        raise ValueError(f"variant {variant.value} requires a target frontier cell")
    if variant in (FieldVariant.DIJKSTRA, FieldVariant.DIJKSTRA_FULL):
        return dijkstra_field(occ, target)[1]
    return orientation_label(occ, target)


def augment_path(
    occ: OccupancyGrid,
    path,
    rng_seed: int,
    max_shift: float,
    spacing: float = 5.0,
) -> Route:
    """Turn a free-cell path into a route: subsample about every ``spacing``
    meters, then shift each interior waypoint perpendicular to the local path
    direction by uniform(-max_shift, +max_shift), shrinking any shift that
    would leave free space. Endpoints stay put. Deterministic per seed."""
    if max_shift < 0:
        raise ValueError("max_shift must be >= 0")
    cells = np.asarray(path, dtype=np.intp).reshape(-1, 2)
    if len(cells) < 2:
        raise ValueError("path needs at least two cells")
    g = occ.geometry
    free = occ.free_mask()
    if not free[cells[:, 1], cells[:, 0]].all():
        raise ValueError("path must lie on free cells")
    pts = np.stack([cell_to_world(g, c) for c in cells])
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    marks = np.arange(0.0, cum[-1], spacing)
    idx = sorted({int(np.searchsorted(cum, m)) for m in marks} | {0, len(pts) - 1})
    wp = pts[idx]

    rng = np.random.default_rng(rng_seed)
    out = [wp[0]]
    for i in range(1, len(wp) - 1):
        direction = wp[i + 1] - wp[i - 1]
        norm = np.linalg.norm(direction)
        if norm == 0:
            out.append(wp[i])
            continue
        perp = np.array([-direction[1], direction[0]]) / norm
        shift = rng.uniform(-max_shift, max_shift)
        # Walk the shift back toward zero until the waypoint is free again.
        magnitude = abs(shift)
        sign = np.sign(shift) if shift != 0 else 1.0
        while magnitude > 0:
            cand = wp[i] + sign * magnitude * perp
            cell = world_to_cell(g, cand)
            if cell is not None and free[cell[1], cell[0]]:
                break
            magnitude = max(0.0, magnitude - g.resolution / 2.0)
        out.append(wp[i] + sign * magnitude * perp)
    out.append(wp[-1])
    return Route(np.stack(out))
