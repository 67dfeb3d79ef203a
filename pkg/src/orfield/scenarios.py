"""Procedural synthetic road scenes and experiment harnesses.

Scenes are built around the vehicle at the world origin, which is also the
raster center: free road corridors of a given half width, obstacles
everywhere else, optional occlusion rectangles forced to Unknown, and a
coarse waypoint route describing the commanded maneuver. The route can be
laterally perturbed (noisy map data) and rotated about the scene center (the
robustness protocol); the ground truth is the noise-free maneuver line.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .fields import FieldVariant, FrontierSet, find_frontiers, make_field
from .grid import CellState, GridGeometry, OccupancyGrid, world_to_cell
from .geometry import Pose, Route
from .metrics import (
    ade,
    coverage,
    fde,
    hit_rate,
    in_free_space_fraction,
    paired_circle_samples,
)
from .planners import (
    PlannerError,
    PlannerParams,
    PlanResult,
    Trajectory,
    field_bezier,
    field_rrt_star,
    point_rrt_star,
)

ROUTE_MARGIN = 1.0  # route endpoints stay this far inside the scene extent
ROUTE_SPACING = 5.0  # coarse waypoint spacing, OSM-like
GROUND_TRUTH_STEP = 0.1

PLANNER_NAMES = ("field-rrt-star", "field-bezier", "point-rrt-star")


class SceneKind(str, Enum):
    STRAIGHT = "straight"
    L_TURN = "l-turn"
    T_JUNCTION = "t-junction"
    FOUR_WAY = "four-way"


@dataclass(frozen=True)
class SceneSpec:
    kind: SceneKind = SceneKind.STRAIGHT
    road_half_width: float = 3.0
    extent: float = 40.0
    occlusions: tuple = ()  # (xmin, ymin, xmax, ymax) world rectangles
    route_noise: float = 0.0
    rotation: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", SceneKind(self.kind))
        if self.road_half_width <= 0:
            raise ValueError("road_half_width must be positive")
        if self.extent <= 4 * self.road_half_width:
            raise ValueError("extent must exceed 4x the road half width")
        if self.route_noise < 0:
            raise ValueError("route_noise must be >= 0")
        object.__setattr__(
            self,
            "occlusions",
            tuple(tuple(float(v) for v in rect) for rect in self.occlusions),
        )

    def to_json(self) -> str:
        d = {
            "kind": self.kind.value,
            "road_half_width": self.road_half_width,
            "extent": self.extent,
            "occlusions": [list(r) for r in self.occlusions],
            "route_noise": self.route_noise,
            "rotation": self.rotation,
            "rng_seed": self.rng_seed,
        }
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SceneSpec":
        data = json.loads(text)
        unknown = set(data) - {
            "kind",
            "road_half_width",
            "extent",
            "occlusions",
            "route_noise",
            "rotation",
            "rng_seed",
        }
        if unknown:
            raise ValueError(f"unknown scene fields: {sorted(unknown)}")
        if "occlusions" in data:
            data["occlusions"] = tuple(tuple(r) for r in data["occlusions"])
        return cls(**data)


@dataclass(frozen=True, eq=False)
class Scene:
    occupancy: OccupancyGrid
    route: Route
    ground_truth: Trajectory


def default_geometry(resolution: float = 0.2, extent: float = 40.0) -> GridGeometry:
    """Square raster covering ``extent`` meters, centered on the vehicle."""
    cells = int(round(extent / resolution))
    half = (cells - 1) / 2.0 * resolution
    return GridGeometry(cells, cells, resolution, (-half, -half))


def _corridor_masks(spec: SceneSpec, g: GridGeometry) -> np.ndarray:
    xs, ys = g.cell_centers()
    hw = spec.road_half_width
    half = spec.extent / 2.0
    along_x = (np.abs(ys) <= hw) & (np.abs(xs) <= half)
    if spec.kind is SceneKind.STRAIGHT:
        return along_x
    if spec.kind is SceneKind.FOUR_WAY:
        return along_x | ((np.abs(xs) <= hw) & (np.abs(ys) <= half))
    if spec.kind is SceneKind.T_JUNCTION:
        return along_x | ((np.abs(xs) <= hw) & (ys >= -hw) & (ys <= half))
    # L-turn: leg in along y=0 up to the corner, leg out upward at the corner.
    corner = spec.extent / 8.0
    leg_in = (np.abs(ys) <= hw) & (xs >= -half) & (xs <= corner + hw)
    leg_out = (np.abs(xs - corner) <= hw) & (ys >= -hw) & (ys <= half)
    return leg_in | leg_out


def _maneuver_polyline(spec: SceneSpec) -> np.ndarray:
    """Nominal centerline of the commanded maneuver, before rotation/noise.
    The vehicle sits at (0, 0); the line runs from behind it to the exit."""
    reach = spec.extent / 2.0 - ROUTE_MARGIN
    if spec.kind in (SceneKind.STRAIGHT, SceneKind.FOUR_WAY):
        return np.array([[-reach, 0.0], [reach, 0.0]])
    if spec.kind is SceneKind.T_JUNCTION:
        return np.array([[-reach, 0.0], [0.0, 0.0], [0.0, reach]])
    corner = spec.extent / 8.0
    return np.array([[-reach, 0.0], [corner, 0.0], [corner, reach]])


def _densify(polyline: np.ndarray, spacing: float) -> np.ndarray:
    out = [polyline[0]]
    for a, b in zip(polyline[:-1], polyline[1:]):
        length = float(np.linalg.norm(b - a))
        steps = max(1, int(math.ceil(length / spacing)))
        for k in range(1, steps + 1):
            out.append(a + (b - a) * (k / steps))
    return np.stack(out)


def _rotate(points: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    return points @ rot.T


def _forward_part(polyline: np.ndarray) -> np.ndarray:
    """Drop the part of the maneuver line behind the vehicle at (0, 0)."""
    dists = np.linalg.norm(polyline, axis=1)
    at = int(np.argmin(dists))
    fwd = polyline[at:]
    if np.linalg.norm(fwd[0]) > 1e-9:
        fwd = np.vstack([[0.0, 0.0], fwd])
    return fwd


def build_scene(spec: SceneSpec, g: GridGeometry | None = None) -> Scene:
    """Occupancy, noisy route and ground-truth trajectory for a scene spec.

    Deterministic per (spec, geometry); the route noise draws come from the
    spec's seed alone. A route waypoint outside the raster is an error.
    """
    if g is None:
        g = default_geometry(extent=spec.extent)
    road = _corridor_masks(spec, g)
    states = np.where(road, CellState.FREE, CellState.OBSTACLE).astype(np.uint8)
    xs, ys = g.cell_centers()
    for xmin, ymin, xmax, ymax in spec.occlusions:
        inside = (xs >= xmin) & (xs <= xmax) & (ys >= ymin) & (ys <= ymax)
        states[inside] = CellState.UNKNOWN
    occ = OccupancyGrid(g, states)

    nominal = _maneuver_polyline(spec)
    route_pts = _rotate(_densify(nominal, ROUTE_SPACING), spec.rotation)
    if spec.route_noise > 0:
        rng = np.random.default_rng(spec.rng_seed)
        for i in range(1, len(route_pts) - 1):
            direction = route_pts[i + 1] - route_pts[i - 1]
            norm = np.linalg.norm(direction)
            if norm == 0:
                continue
            perp = np.array([-direction[1], direction[0]]) / norm
            route_pts[i] = route_pts[i] + rng.uniform(
                -spec.route_noise, spec.route_noise
            ) * perp
    for p in route_pts:
        if world_to_cell(g, p) is None:
            raise ValueError("route exits the raster")
    route = Route(route_pts)

    gt_pts = _rotate(_densify(_forward_part(nominal), GROUND_TRUTH_STEP), spec.rotation)
    ground_truth = Trajectory.from_positions(gt_pts)
    return Scene(occ, route, ground_truth)


def _route_heading_at(route: Route, point) -> float:
    """Direction of the route edge nearest to ``point``."""
    wp = route.waypoints
    deltas = np.diff(wp, axis=0)
    lengths_sq = (deltas**2).sum(axis=1)
    rel = np.asarray(point, dtype=np.float64)[None, :] - wp[:-1]
    t = np.clip((rel * deltas).sum(axis=1) / lengths_sq, 0.0, 1.0)
    foot = wp[:-1] + t[:, None] * deltas
    best = int(np.argmin(((foot - point) ** 2).sum(axis=1)))
    return float(np.arctan2(deltas[best, 1], deltas[best, 0]))


def _nearest_free_point(occ: OccupancyGrid, point) -> np.ndarray:
    rows, cols = np.nonzero(occ.free_mask())
    if len(rows) == 0:
        raise ValueError("occupancy grid has no free cell")
    g = occ.geometry
    centers = np.column_stack(
        [g.origin[0] + cols * g.resolution, g.origin[1] + rows * g.resolution]
    )
    return centers[int(np.argmin(((centers - np.asarray(point)) ** 2).sum(axis=1)))]


def _full_observation(spec: SceneSpec, g: GridGeometry) -> Scene:
    return build_scene(replace(spec, occlusions=()), g)


def _build_case_field(
    variant: FieldVariant,
    scene: Scene,
    full_scene: Scene,
    frontiers: FrontierSet,
    target_index: int,
):
    variant = FieldVariant(variant)
    full = variant in (FieldVariant.DIJKSTRA_FULL, FieldVariant.GRADIENT_FULL)
    occ = full_scene.occupancy if full else scene.occupancy
    target = frontiers[target_index].representative
    return make_field(variant, occ, route=scene.route, target=target)


def _run_planner(
    planner: str,
    field,
    scene: Scene,
    start: Pose,
    params: PlannerParams,
) -> PlanResult:
    if planner == "field-rrt-star":
        return field_rrt_star(field, start, params)
    if planner == "field-bezier":
        return field_bezier(field, start, params)
    if planner == "point-rrt-star":
        goal = _nearest_free_point(scene.occupancy, scene.route.waypoints[-1])
        return point_rrt_star(scene.occupancy, start, goal, params)
    raise ValueError(f"unknown planner {planner!r}; choose from {PLANNER_NAMES}")


@dataclass
class ExperimentResult:
    records: list
    aggregates: dict
    config: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "config": self.config,
                "aggregates": self.aggregates,
                "records": self.records,
            },
            indent=2,
            sort_keys=True,
        )

    def to_csv(self) -> str:
        columns: list[str] = []
        for rec in self.records:
            for key in rec:
                if key not in columns:
                    columns.append(key)
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for rec in self.records:
            writer.writerow(rec)
        return buf.getvalue()


def rotation_robustness(
    spec: SceneSpec,
    planner: str,
    variant: FieldVariant,
    step_degrees: int,
    geometry: GridGeometry | None = None,
    params: PlannerParams | None = None,
) -> ExperimentResult:
    """Rotate the route through a full turn in fixed steps, plan each case
    and record how much of each plan stays in free space and which branch it
    exits through (the frontier nearest the trajectory end). The commanded
    branch is the frontier nearest the rotated route's endpoint."""
    if step_degrees <= 0 or 360 % step_degrees != 0:
        raise ValueError("360 must be divisible by step_degrees")
    params = params or PlannerParams()
    geometry = geometry or default_geometry(extent=spec.extent)
    records = []
    histogram: dict[int, int] = {}
    correct = 0
    fractions = []
    for index, deg in enumerate(range(0, 360, step_degrees)):
        case_spec = replace(spec, rotation=math.radians(deg))
        record = {"case": index, "rotation_deg": deg}
        try:
            scene = build_scene(case_spec, geometry)
            full_scene = _full_observation(case_spec, geometry)
            frontiers = find_frontiers(full_scene.occupancy, min_length=2)
            commanded = frontiers.nearest(geometry, scene.route.waypoints[-1])
            field = _build_case_field(variant, scene, full_scene, frontiers, commanded)
            start = Pose(
                np.zeros(2), _route_heading_at(scene.route, np.zeros(2))
            )
            result = _run_planner(
                planner, field, scene, start, params.with_seed(params.rng_seed + index)
            )
            fraction = in_free_space_fraction(result.trajectory, scene.occupancy)
            exit_branch = frontiers.nearest(
                geometry, result.trajectory.positions[-1]
            )
            record.update(
                {
                    "in_free_space": fraction,
                    "exit_branch": exit_branch,
                    "commanded_branch": commanded,
                    "correct_branch": bool(exit_branch == commanded),
                    "energy": result.energy,
                    "degraded": result.degraded,
                }
            )
            fractions.append(fraction)
            histogram[exit_branch] = histogram.get(exit_branch, 0) + 1
            correct += int(exit_branch == commanded)
        except (PlannerError, ValueError) as exc:
            record["error"] = str(exc)
        records.append(record)
    aggregates = {
        "cases": len(records),
        "failed_cases": sum("error" in r for r in records),
        "mean_in_free_space": float(np.mean(fractions)) if fractions else None,
        "correct_branch_count": correct,
        "branch_histogram": {str(k): v for k, v in sorted(histogram.items())},
    }
    config = {
        "harness": "rotation",
        "scene": json.loads(spec.to_json()),
        "planner": planner,
        "variant": FieldVariant(variant).value,
        "step_degrees": step_degrees,
        "params": json.loads(params.to_json()),
    }
    return ExperimentResult(records, aggregates, config)


def ablation_sweep(
    scenes,
    variants,
    planners,
    radii,
    d: float,
    geometry: GridGeometry | None = None,
    params: PlannerParams | None = None,
) -> ExperimentResult:
    """Cross product of scenes x variants x planners; each case is planned
    and scored against the scene ground truth on the given sampling radii."""
    scenes = list(scenes)
    variants = [FieldVariant(v) for v in variants]
    planners = list(planners)
    radii = list(radii)
    if not scenes or not variants or not planners or not radii:
        raise ValueError("scenes, variants, planners and radii must be nonempty")
    params = params or PlannerParams()
    records = []
    for si, spec in enumerate(scenes):
        g = geometry or default_geometry(extent=spec.extent)
        scene = build_scene(spec, g)
        full_scene = _full_observation(spec, g)
        frontiers = find_frontiers(full_scene.occupancy, min_length=2)
        target = frontiers.nearest(g, scene.route.waypoints[-1])
        start = Pose(np.zeros(2), _route_heading_at(scene.route, np.zeros(2)))
        for variant in variants:
            for planner in planners:
                record = {
                    "scene": si,
                    "kind": spec.kind.value,
                    "variant": variant.value,
                    "planner": planner,
                }
                try:
                    field = _build_case_field(
                        variant, scene, full_scene, frontiers, target
                    )
                    result = _run_planner(planner, field, scene, start, params)
                    pair = paired_circle_samples(
                        scene.ground_truth, result.trajectory, np.zeros(2), radii
                    )
                    record.update(
                        {
                            "ade": ade(pair),
                            "fde": fde(pair),
                            "hit": hit_rate(pair, d),
                            "coverage": coverage(pair, d),
                            "energy": result.energy,
                            "degraded": result.degraded,
                            "in_free_space": in_free_space_fraction(
                                result.trajectory, scene.occupancy
                            ),
                        }
                    )
                except (PlannerError, ValueError) as exc:
                    record["error"] = str(exc)
                records.append(record)
    ok = [r for r in records if "error" not in r]
    aggregates = {
        "cases": len(records),
        "failed_cases": len(records) - len(ok),
        "mean_ade": float(np.mean([r["ade"] for r in ok])) if ok else None,
        "mean_fde": float(np.mean([r["fde"] for r in ok])) if ok else None,
        "mean_coverage": float(np.mean([r["coverage"] for r in ok])) if ok else None,
    }
    config = {
        "harness": "ablation",
        "scenes": [json.loads(s.to_json()) for s in scenes],
        "variants": [v.value for v in variants],
        "planners": planners,
        "radii": radii,
        "d": d,
        "params": json.loads(params.to_json()),
    }
    return ExperimentResult(records, aggregates, config)
