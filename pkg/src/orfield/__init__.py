"""Orientation-field construction and field-guided trajectory planning."""

from .grid import (
    BevGrid,
    CellState,
    GridGeometry,
    OccupancyGrid,
    OrField,
    ScalarGrid,
)
from .geometry import BezierChain, CubicBezier, Pose, Route
from .fields import FieldVariant, Frontier, FrontierSet
from .planners import PlannerError, PlannerParams, PlanResult, Trajectory
from .scenarios import Scene, SceneKind, SceneSpec

__all__ = [
    "BevGrid",
    "BezierChain",
    "CellState",
    "CubicBezier",
    "FieldVariant",
    "Frontier",
    "FrontierSet",
    "GridGeometry",
    "OccupancyGrid",
    "OrField",
    "PlannerError",
    "PlannerParams",
    "PlanResult",
    "Pose",
    "Route",
    "ScalarGrid",
    "Scene",
    "SceneKind",
    "SceneSpec",
    "Trajectory",
]
