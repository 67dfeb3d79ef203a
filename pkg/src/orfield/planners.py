"""Trajectory planners driven by orientation-field energy.

The shared edge cost is an angular-deviation energy: a cell crossed in
direction v with field vector n contributes

    e = ||n|| * (dtheta / 2) + (1 - ||n||) * (pi / 2)

where dtheta is the wrapped angle between n and v. A fully confident,
aligned cell costs nothing; an anti-parallel or fully uncertain cell costs
pi/2 (the half-circle sector). Field-RRT* grows a tree that minimizes the
accumulated energy E and reads out the cheapest path long enough to reach
the planning horizon; Field-Bezier scores a batch of endpoint-constrained
cubics by the same energy; the point planner is a classical shortest-path
RRT* used as an ablation baseline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    CubicBezier,
    Pose,
    plan_bezier_candidate,
)
from .grid import (
    CellState,
    GridGeometry,
    OccupancyGrid,
    OrField,
    supercover_cells,
    uniform_filter,
    world_to_cell,
)
from .loss import wrap_residuals

HALF_PI = np.pi / 2.0


class PlannerError(RuntimeError):
    """No usable plan could be produced."""


@dataclass(frozen=True)
class PlannerParams:
    """Planner knobs. Defaults follow the reference configuration of
    1 m steps, 2 m neighbor radius and 1000 iterations."""

    step_size: float = 1.0
    neighbor_radius: float = 2.0
    iterations: int = 1000
    planning_radius: float = 20.0
    handle: float | None = None  # Bezier control distance; 0.3 * radius if unset
    candidate_count: int = 72
    smoothing_radius: int = 1
    rng_seed: int = 0
    downsample: bool = False

    def __post_init__(self):
        if min(self.step_size, self.neighbor_radius, self.planning_radius) <= 0:
            raise ValueError("lengths must be positive")
        if self.handle is not None and self.handle <= 0:
            raise ValueError("handle must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.neighbor_radius < self.step_size:
            raise ValueError("neighbor_radius must be >= step_size")
        if self.candidate_count < 1:
            raise ValueError("candidate_count must be >= 1")
        if self.smoothing_radius < 0:
            raise ValueError("smoothing_radius must be >= 0")

    @property
    def bezier_handle(self) -> float:
        return self.handle if self.handle is not None else 0.3 * self.planning_radius

    def to_json(self) -> str:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PlannerParams":
        data = json.loads(text)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown planner parameters: {sorted(unknown)}")
        return cls(**data)

    def with_seed(self, seed: int) -> "PlannerParams":
        return replace(self, rng_seed=seed)


@dataclass
class Trajectory:
    """Ordered (x, y, heading) poses; at least two, headings in [-pi, pi]."""

    poses: np.ndarray

    def __post_init__(self):
        poses = np.asarray(self.poses, dtype=np.float64)
        if poses.ndim != 2 or poses.shape[1] != 3 or poses.shape[0] < 2:
            raise ValueError("trajectory needs at least two (x, y, heading) poses")
        if not np.isfinite(poses).all():
            raise ValueError("trajectory poses must be finite")
        if np.abs(poses[:, 2]).max() > np.pi:
            raise ValueError("headings must lie in [-pi, pi]")
        self.poses = poses

    @property
    def positions(self) -> np.ndarray:
        return self.poses[:, :2]

    @property
    def headings(self) -> np.ndarray:
        return self.poses[:, 2]

    def arc_length(self) -> float:
        return float(np.linalg.norm(np.diff(self.positions, axis=0), axis=1).sum())

    def to_json(self) -> str:
        return json.dumps({"poses": self.poses.tolist()}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Trajectory":
        return cls(np.array(json.loads(text)["poses"], dtype=np.float64))

    @classmethod
    def from_positions(cls, positions: np.ndarray) -> "Trajectory":
        """Headings from consecutive positions; the final heading repeats the
        one of the last segment."""
        positions = np.asarray(positions, dtype=np.float64)
        d = np.diff(positions, axis=0)
        h = np.arctan2(d[:, 1], d[:, 0])
        headings = np.append(h, h[-1])
        return cls(np.column_stack([positions, headings]))


class RrtTree:
    """Tree bookkeeping shared by both RRT* planners: positions, parent
    links, accumulated cost E and path length, with subtree cost propagation
    on rewiring."""

    def __init__(self, root_position, capacity: int):
        self.positions = np.empty((capacity, 2))
        self.positions[0] = root_position
        self.parents = np.full(capacity, -1, dtype=np.intp)
        self.energies = np.zeros(capacity)
        self.path_lengths = np.zeros(capacity)
        self.children: list[list[int]] = [[] for _ in range(capacity)]
        self.count = 1

    def add(self, position, parent: int, edge_energy: float) -> int:
        i = self.count
        self.positions[i] = position
        self.parents[i] = parent
        self.energies[i] = self.energies[parent] + edge_energy
        self.path_lengths[i] = self.path_lengths[parent] + float(
            np.linalg.norm(position - self.positions[parent])
        )
        self.children[parent].append(i)
        self.count = i + 1
        return i

    def reparent(self, node: int, new_parent: int, edge_energy: float) -> None:
        old = self.parents[node]
        self.children[old].remove(node)
        self.parents[node] = new_parent
        self.children[new_parent].append(node)
        de = (self.energies[new_parent] + edge_energy) - self.energies[node]
        dl = (
            self.path_lengths[new_parent]
            + float(np.linalg.norm(self.positions[node] - self.positions[new_parent]))
        ) - self.path_lengths[node]
        stack = [node]
        while stack:
            k = stack.pop()
            self.energies[k] += de
            self.path_lengths[k] += dl
            stack.extend(self.children[k])

    def path_to_root(self, node: int) -> list[int]:
        chain = []
        while node >= 0:
            chain.append(node)
            node = self.parents[node]
        chain.reverse()
        return chain


@dataclass
class PlanResult:
    trajectory: Trajectory
    energy: float
    degraded: bool = False
    tree: RrtTree | None = None
    stats: dict = field(default_factory=dict)


class _FieldEnergy:
    """Precomputed per-cell angle/confidence for fast edge scoring."""

    def __init__(self, f: OrField):
        self.geometry = f.geometry
        self.angles = f.angles()
        self.norms = f.norms()

    def cells_energy(self, cells: np.ndarray, v_angle) -> float:
        a = self.angles[cells[:, 1], cells[:, 0]]
        n = self.norms[cells[:, 1], cells[:, 0]]
        dtheta = np.abs(wrap_residuals(a, v_angle))
        return float(np.sum(n * (dtheta / 2.0) + (1.0 - n) * HALF_PI))

    def edge(self, a, b) -> tuple[float, np.ndarray]:
        cells = supercover_cells(self.geometry, a, b)
        v_angle = np.arctan2(b[1] - a[1], b[0] - a[0])
        return self.cells_energy(cells, v_angle), cells


def edge_energy(f: OrField, a, b) -> float:
    """Energy accumulated over every cell the segment a->b touches."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.array_equal(a, b):
        raise ValueError("edge endpoints must differ")
    return _FieldEnergy(f).edge(a, b)[0]


def downsample_field(f: OrField) -> OrField:
    """Halve the raster along both axes by 2x2 block averaging (the planner
    speed trick); cell size doubles."""
    g = f.geometry
    h2, w2 = g.height // 2, g.width // 2
    if h2 < 1 or w2 < 1:
        raise ValueError("field too small to downsample")
    v = f.vectors[: h2 * 2, : w2 * 2].reshape(h2, 2, w2, 2, 2).mean(axis=(1, 3))
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    over = norms > 1.0
    if over.any():
        np.divide(v, norms, out=v, where=over & (norms > 0))
    g2 = GridGeometry(
        w2,
        h2,
        g.resolution * 2.0,
        (g.origin[0] + g.resolution / 2.0, g.origin[1] + g.resolution / 2.0),
    )
    return OrField(g2, v)


def _blocked_mask(occ: OccupancyGrid | None, states):
    if occ is None:
        return None
    return np.isin(occ.states, states)


def _edge_blocked(occ: OccupancyGrid, blocked, a, b) -> bool:
    cells = supercover_cells(occ.geometry, a, b)
    return bool(blocked[cells[:, 1], cells[:, 0]].any())


def field_rrt_star(
    f: OrField,
    start: Pose,
    params: PlannerParams,
    occ: OccupancyGrid | None = None,
) -> PlanResult:
    """Grow an energy-minimizing tree inside the planning disc and return the
    cheapest path whose length reaches the planning radius.

    The field is smoothed with the uniform filter before planning so that
    neighbor disagreement shortens vectors and raises local cost. When an
    occupancy grid is supplied, edges crossing obstacle cells are rejected;
    without it the energy alone penalizes off-road travel. Leaves become
    eligible through a zero-cost pseudo edge once their path length reaches
    the planning radius; if no leaf qualifies the longest path is returned
    with ``degraded`` set.
    """
    smoothed = uniform_filter(f, params.smoothing_radius)
    if params.downsample:
        smoothed = downsample_field(smoothed)
    g = smoothed.geometry
    if world_to_cell(g, start.position) is None:
        raise ValueError("start pose outside the field")
    energy = _FieldEnergy(smoothed)
    blocked = _blocked_mask(occ, [CellState.OBSTACLE])

    tree = RrtTree(start.position, params.iterations + 1)
    rng = np.random.default_rng(params.rng_seed)
    radius_sq = params.neighbor_radius**2
    for _ in range(params.iterations):
        u = rng.random(2)
        rad = params.planning_radius * np.sqrt(u[0])
        ang = 2.0 * np.pi * u[1]
        sample = start.position + rad * np.array([np.cos(ang), np.sin(ang)])
        if world_to_cell(g, sample) is None:
            continue
        pos = tree.positions[: tree.count]
        d2 = ((pos - sample) ** 2).sum(axis=1)
        nearest = int(np.argmin(d2))
        dist = float(np.sqrt(d2[nearest]))
        if dist < 1e-9:
            continue
        step = min(params.step_size, dist)
        new = pos[nearest] + (sample - pos[nearest]) * (step / dist)

        nd2 = ((pos - new) ** 2).sum(axis=1)
        near = np.nonzero(nd2 <= radius_sq)[0]
        best_parent, best_total, best_edge = -1, np.inf, 0.0
        for j in near:
            if occ is not None and _edge_blocked(occ, blocked, pos[j], new):
                continue
            e, _ = energy.edge(pos[j], new)
            total = tree.energies[j] + e
            if total < best_total:
                best_parent, best_total, best_edge = int(j), total, e
        if best_parent < 0:
            continue
        node = tree.add(new, best_parent, best_edge)

        for j in near:
            if j == best_parent or j == 0:
                continue
            if occ is not None and _edge_blocked(occ, blocked, new, pos[j]):
                continue
            e, _ = energy.edge(new, pos[j])
            if tree.energies[node] + e < tree.energies[j]:
                tree.reparent(int(j), node, e)

    lengths = tree.path_lengths[: tree.count]
    eligible = np.nonzero(lengths >= params.planning_radius)[0]
    degraded = len(eligible) == 0
    if degraded:
        best = int(np.argmax(lengths))
        if best == 0:
            raise PlannerError("tree could not grow from the start pose")
    else:
        best = int(eligible[np.argmin(tree.energies[eligible])])
    chain = tree.path_to_root(best)
    trajectory = Trajectory.from_positions(tree.positions[chain])
    return PlanResult(
        trajectory,
        energy=float(tree.energies[best]),
        degraded=degraded,
        tree=tree,
        stats={
            "iterations": params.iterations,
            "nodes": tree.count,
            "eligible_leaves": int(len(eligible)),
            "path_length": float(lengths[best]),
        },
    )


def _curve_energy(energy: _FieldEnergy, curve: CubicBezier) -> float:
    """Sum per-cell energy over the cells the curve occupies, scoring each
    cell with the curve tangent where it first enters. Cells outside the
    raster count as zero-confidence (pi/2)."""
    g = energy.geometry
    polygon = (
        np.linalg.norm(curve.c1 - curve.p0)
        + np.linalg.norm(curve.c2 - curve.c1)
        + np.linalg.norm(curve.p3 - curve.c2)
    )
    nsamp = int(np.clip(np.ceil(polygon / (g.resolution * 0.5)), 63, 4095)) + 1
    ts = np.linspace(0.0, 1.0, nsamp)
    s = (1.0 - ts)[:, None]
    t = ts[:, None]
    pts = (
        s**3 * curve.p0
        + 3 * s**2 * t * curve.c1
        + 3 * s * t**2 * curve.c2
        + t**3 * curve.p3
    )
    cols = np.floor((pts[:, 0] - g.origin[0]) / g.resolution + 0.5).astype(np.int64)
    rows = np.floor((pts[:, 1] - g.origin[1]) / g.resolution + 0.5).astype(np.int64)
    flat = (cols + 1_000_000) * 4_000_000 + (rows + 1_000_000)
    _, first = np.unique(flat, return_index=True)
    cols, rows = cols[first], rows[first]
    t_first = ts[first]
    sd = (1.0 - t_first)[:, None]
    td = t_first[:, None]
    deriv = (
        3 * sd**2 * (curve.c1 - curve.p0)
        + 6 * sd * td * (curve.c2 - curve.c1)
        + 3 * td**2 * (curve.p3 - curve.c2)
    )
    v_angle = np.arctan2(deriv[:, 1], deriv[:, 0])
    inside = (cols >= 0) & (cols < g.width) & (rows >= 0) & (rows < g.height)
    a = energy.angles[rows[inside], cols[inside]]
    n = energy.norms[rows[inside], cols[inside]]
    dtheta = np.abs(wrap_residuals(a, v_angle[inside]))
    total = float(np.sum(n * (dtheta / 2.0) + (1.0 - n) * HALF_PI))
    return total + HALF_PI * float((~inside).sum())


def field_bezier(f: OrField, start: Pose, params: PlannerParams) -> PlanResult:
    """Score endpoint-constrained cubics to evenly spaced points on the
    planning circle and return the cheapest one. Start and end headings are
    read from the field; candidates whose endpoint cell falls outside the
    raster are skipped, ties go to the lower endpoint index."""
    smoothed = uniform_filter(f, params.smoothing_radius)
    g = smoothed.geometry
    start_cell = world_to_cell(g, start.position)
    if start_cell is None:
        raise ValueError("start pose outside the field")
    energy = _FieldEnergy(smoothed)
    start_vec = smoothed.vectors[start_cell[1], start_cell[0]]
    if np.linalg.norm(start_vec) > 0:
        start_heading = float(np.arctan2(start_vec[1], start_vec[0]))
    else:
        start_heading = start.heading
    start_pose = Pose(start.position, start_heading)
    handle = params.bezier_handle

    best_energy, best_index, best_curve = np.inf, -1, None
    skipped = 0
    for k in range(params.candidate_count):
        ang = 2.0 * np.pi * k / params.candidate_count
        end_pos = start.position + params.planning_radius * np.array(
            [np.cos(ang), np.sin(ang)]
        )
        cell = world_to_cell(g, end_pos)
        if cell is None:
            skipped += 1
            continue
        end_heading = float(energy.angles[cell[1], cell[0]])
        curve = plan_bezier_candidate(start_pose, Pose(end_pos, end_heading), handle)
        e = _curve_energy(energy, curve)
        if e < best_energy:
            best_energy, best_index, best_curve = e, k, curve
    if best_curve is None:
        raise PlannerError("all candidate endpoints fall outside the field")

    ts = np.linspace(0.0, 1.0, 128)
    s = (1.0 - ts)[:, None]
    t = ts[:, None]
    pts = (
        s**3 * best_curve.p0
        + 3 * s**2 * t * best_curve.c1
        + 3 * s * t**2 * best_curve.c2
        + t**3 * best_curve.p3
    )
    deriv = (
        3 * s**2 * (best_curve.c1 - best_curve.p0)
        + 6 * s * t * (best_curve.c2 - best_curve.c1)
        + 3 * t**2 * (best_curve.p3 - best_curve.c2)
    )
    headings = np.arctan2(deriv[:, 1], deriv[:, 0])
    trajectory = Trajectory(np.column_stack([pts, headings]))
    return PlanResult(
        trajectory,
        energy=float(best_energy),
        stats={
            "endpoint_index": best_index,
            "candidates": params.candidate_count,
            "skipped": skipped,
        },
    )


def point_rrt_star(
    occ: OccupancyGrid,
    start: Pose,
    goal,
    params: PlannerParams,
) -> PlanResult:
    """Classical RRT* minimizing Euclidean path length over free space; the
    goal region is a step_size disc around the goal point. Edges crossing
    any non-free cell are rejected."""
    g = occ.geometry
    goal = np.asarray(goal, dtype=np.float64)
    start_cell = world_to_cell(g, start.position)
    goal_cell = world_to_cell(g, goal)
    free = occ.free_mask()
    if start_cell is None or not free[start_cell[1], start_cell[0]]:
        raise ValueError("start must lie in a free cell")
    if goal_cell is None or not free[goal_cell[1], goal_cell[0]]:
        raise ValueError("goal must lie in a free cell")
    blocked = ~free
    if float(np.linalg.norm(goal - start.position)) <= params.step_size:
        heading = start.heading
        if not np.array_equal(goal, start.position):
            d = goal - start.position
            heading = float(np.arctan2(d[1], d[0]))
        poses = np.array(
            [[*start.position, heading], [*goal, heading]], dtype=np.float64
        )
        return PlanResult(Trajectory(poses), energy=0.0)

    xs = g.x_coords()
    ys = g.y_coords()
    span = (
        xs[0] - g.resolution / 2,
        xs[-1] + g.resolution / 2,
        ys[0] - g.resolution / 2,
        ys[-1] + g.resolution / 2,
    )
    tree = RrtTree(start.position, params.iterations + 1)
    rng = np.random.default_rng(params.rng_seed)
    radius_sq = params.neighbor_radius**2
    goal_bias = 0.05
    for _ in range(params.iterations):
        u = rng.random(3)
        if u[0] < goal_bias:
            sample = goal
        else:
            sample = np.array(
                [
                    span[0] + u[1] * (span[1] - span[0]),
                    span[2] + u[2] * (span[3] - span[2]),
                ]
            )
        if world_to_cell(g, sample) is None:
            continue
        pos = tree.positions[: tree.count]
        d2 = ((pos - sample) ** 2).sum(axis=1)
        nearest = int(np.argmin(d2))
        dist = float(np.sqrt(d2[nearest]))
        if dist < 1e-9:
            continue
        step = min(params.step_size, dist)
        new = pos[nearest] + (sample - pos[nearest]) * (step / dist)

        nd2 = ((pos - new) ** 2).sum(axis=1)
        near = np.nonzero(nd2 <= radius_sq)[0]
        best_parent, best_total = -1, np.inf
        for j in near:
            if _edge_blocked(occ, blocked, pos[j], new):
                continue
            total = tree.energies[j] + float(np.sqrt(nd2[j]))
            if total < best_total:
                best_parent, best_total = int(j), total
        if best_parent < 0:
            continue
        node = tree.add(new, best_parent, float(np.sqrt(nd2[best_parent])))

        for j in near:
            if j == best_parent or j == 0:
                continue
            e = float(np.sqrt(nd2[j]))
            if tree.energies[node] + e < tree.energies[j]:
                if _edge_blocked(occ, blocked, new, pos[j]):
                    continue
                tree.reparent(int(j), node, e)

    pos = tree.positions[: tree.count]
    gd = np.linalg.norm(pos - goal, axis=1)
    in_region = np.nonzero(gd <= params.step_size)[0]
    if len(in_region) == 0:
        raise PlannerError("goal not reached within the iteration budget")
    totals = tree.energies[in_region] + gd[in_region]
    best = int(in_region[np.argmin(totals)])
    chain = tree.path_to_root(best)
    points = [tree.positions[i] for i in chain]
    if not np.array_equal(points[-1], goal) and not _edge_blocked(
        occ, blocked, points[-1], goal
    ):
        points.append(goal)
    trajectory = Trajectory.from_positions(np.stack(points))
    return PlanResult(
        trajectory,
        energy=float(tree.energies[best]),
        tree=tree,
        stats={"nodes": tree.count, "goal_candidates": int(len(in_region))},
    )
