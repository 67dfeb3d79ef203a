"""Routes, cubic Bezier curves and closest-point/tangent queries."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

# Coarse sampling density and refinement depth for chain queries. 64 samples
# per segment bracket the global minimum; golden-section narrows the bracket
# below the 1e-4 m tolerance.
CHAIN_SAMPLES_PER_SEGMENT = 64
GOLDEN_SECTION_ITERATIONS = 30
CLOSEST_POINT_TOLERANCE = 1e-4

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class Pose:
    """World position (meters) plus heading (radians)."""

    position: np.ndarray
    heading: float

    def __post_init__(self):
        object.__setattr__(
            self, "position", np.asarray(self.position, dtype=np.float64).reshape(2)
        )
        object.__setattr__(self, "heading", float(self.heading))

    @property
    def direction(self) -> np.ndarray:
        return np.array([np.cos(self.heading), np.sin(self.heading)])


@dataclass(frozen=True, eq=False)
class Route:
    """Waypoint polyline in world meters; consecutive waypoints distinct."""

    waypoints: np.ndarray

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=np.float64)
        if wp.ndim != 2 or wp.shape[1] != 2 or wp.shape[0] < 2:
            raise ValueError("route needs at least two (x, y) waypoints")
        if not np.isfinite(wp).all():
            raise ValueError("route waypoints must be finite")
        if (np.linalg.norm(np.diff(wp, axis=0), axis=1) == 0).any():
            raise ValueError("consecutive route waypoints must be distinct")
        object.__setattr__(self, "waypoints", wp)

    def edge_directions(self) -> np.ndarray:
        d = np.diff(self.waypoints, axis=0)
        return d / np.linalg.norm(d, axis=1, keepdims=True)

    def to_json(self) -> str:
        return json.dumps({"waypoints": self.waypoints.tolist()}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Route":
        return cls(np.array(json.loads(text)["waypoints"], dtype=np.float64))


@dataclass(frozen=True, eq=False)
class CubicBezier:
    p0: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    p3: np.ndarray

    def __post_init__(self):
        for name in ("p0", "c1", "c2", "p3"):
            object.__setattr__(
                self, name, np.asarray(getattr(self, name), dtype=np.float64).reshape(2)
            )


@dataclass(frozen=True, eq=False)
class BezierChain:
    """C0-continuous sequence of cubic segments."""

    segments: tuple

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("chain must contain at least one segment")
        for prev, nxt in zip(segs, segs[1:]):
            if not np.allclose(prev.p3, nxt.p0, atol=1e-9):
                raise ValueError("chain segments must share endpoints")
        object.__setattr__(self, "segments", segs)


def _check_t(t):
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"parameter t={t} outside [0, 1]")
    return t


def bezier_eval(b: CubicBezier, t: float) -> np.ndarray:
    t = _check_t(t)
    s = 1.0 - t
    return (
        s * s * s * b.p0
        + 3.0 * s * s * t * b.c1
        + 3.0 * s * t * t * b.c2
        + t * t * t * b.p3
    )


def _bezier_derivative(b: CubicBezier, t: float) -> np.ndarray:
    s = 1.0 - t
    return 3.0 * s * s * (b.c1 - b.p0) + 6.0 * s * t * (b.c2 - b.c1) + 3.0 * t * t * (
        b.p3 - b.c2
    )


def bezier_tangent(b: CubicBezier, t: float) -> np.ndarray:
    """Unit tangent B'(t)/||B'(t)||; a vanishing derivative falls back to the
    chord direction, and a fully degenerate curve is an error."""
    t = _check_t(t)
    d = _bezier_derivative(b, t)
    n = np.linalg.norm(d)
    if n <= 1e-12:
        d = b.p3 - b.p0
        n = np.linalg.norm(d)
        if n <= 1e-12:
            raise ValueError("degenerate curve: no tangent direction")
    return d / n


def route_to_bezier_chain(route: Route) -> BezierChain:
    """One cubic per waypoint pair. Control points sit at 0.35 of the chord
    length along the averaged incident edge directions, which keeps the chain
    interpolating every waypoint while rounding corners toward the side of
    maximum chord offset."""
    wp = route.waypoints
    dirs = route.edge_directions()
    n = len(wp)
    tangents = np.empty_like(wp)
    tangents[0] = dirs[0]
    tangents[-1] = dirs[-1]
    for i in range(1, n - 1):
        avg = dirs[i - 1] + dirs[i]
        norm = np.linalg.norm(avg)
        # A cusp (exact U-turn) has no averaged direction; keep the outgoing edge.
        tangents[i] = avg / norm if norm > 1e-12 else dirs[i]
    segments = []
    for i in range(n - 1):
        beta = 0.35 * np.linalg.norm(wp[i + 1] - wp[i])
        segments.append(
            CubicBezier(
                wp[i],
                wp[i] + beta * tangents[i],
                wp[i + 1] - beta * tangents[i + 1],
                wp[i + 1],
            )
        )
    return BezierChain(tuple(segments))


@dataclass(frozen=True, eq=False)
class ChainPoint:
    """Closest-point query result."""

    segment: int
    t: float
    point: np.ndarray
    tangent: np.ndarray
    distance: float


def _chain_control_arrays(chain: BezierChain):
    p0 = np.stack([s.p0 for s in chain.segments])
    c1 = np.stack([s.c1 for s in chain.segments])
    c2 = np.stack([s.c2 for s in chain.segments])
    p3 = np.stack([s.p3 for s in chain.segments])
    return p0, c1, c2, p3


def _eval_rows(p0, c1, c2, p3, t):
    """Evaluate one cubic per row at its own parameter; t has shape (M,)."""
    t = t[:, None]
    s = 1.0 - t
    return s * s * s * p0 + 3 * s * s * t * c1 + 3 * s * t * t * c2 + t * t * t * p3


def _derivative_rows(p0, c1, c2, p3, t):
    t = t[:, None]
    s = 1.0 - t
    return 3 * s * s * (c1 - p0) + 6 * s * t * (c2 - c1) + 3 * t * t * (p3 - c2)


def closest_points_on_chain(chain: BezierChain, queries: np.ndarray):
    """Vectorized closest-point query for an (M, 2) array of world points.

    Returns (segment indices, parameters, points, unit tangents, distances).
    Ties resolve to the lowest segment index, then the lowest parameter.
    """
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, 2)
    p0, c1, c2, p3 = _chain_control_arrays(chain)
    nseg = len(chain.segments)
    ts = np.linspace(0.0, 1.0, CHAIN_SAMPLES_PER_SEGMENT)
    s = (1.0 - ts)[None, :, None]
    t3 = ts[None, :, None]
    samples = (
        s**3 * p0[:, None]
        + 3 * s**2 * t3 * c1[:, None]
        + 3 * s * t3**2 * c2[:, None]
        + t3**3 * p3[:, None]
    )  # (S, T, 2)
    flat = samples.reshape(nseg * len(ts), 2)

    m = len(queries)
    seg_idx = np.empty(m, dtype=np.intp)
    t_best = np.empty(m)
    chunk = max(1, int(4_000_000 // max(len(flat), 1)))
    for start in range(0, m, chunk):
        q = queries[start : start + chunk]
        d2 = ((flat[None, :, :] - q[:, None, :]) ** 2).sum(axis=2)
        best = d2.argmin(axis=1)  # first occurrence = lowest segment, lowest t
        seg_idx[start : start + chunk] = best // len(ts)
        t_best[start : start + chunk] = ts[best % len(ts)]

    # Golden-section refinement inside the sample bracket, per query.
    spacing = 1.0 / (CHAIN_SAMPLES_PER_SEGMENT - 1)
    lo = np.clip(t_best - spacing, 0.0, 1.0)
    hi = np.clip(t_best + spacing, 0.0, 1.0)
    q0, q1, q2, q3 = p0[seg_idx], c1[seg_idx], c2[seg_idx], p3[seg_idx]

    def f(t):
        return ((_eval_rows(q0, q1, q2, q3, t) - queries) ** 2).sum(axis=1)

    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    for _ in range(GOLDEN_SECTION_ITERATIONS):
        shrink_right = f(x1) < f(x2)
        hi = np.where(shrink_right, x2, hi)
        lo = np.where(shrink_right, lo, x1)
        x1 = hi - _INVPHI * (hi - lo)
        x2 = lo + _INVPHI * (hi - lo)

    t_final = (lo + hi) / 2.0
    points = _eval_rows(q0, q1, q2, q3, t_final)
    deriv = _derivative_rows(q0, q1, q2, q3, t_final)
    norms = np.linalg.norm(deriv, axis=1, keepdims=True)
    chord = q3 - q0
    chord_n = np.linalg.norm(chord, axis=1, keepdims=True)
    use_chord = norms <= 1e-12
    deriv = np.where(use_chord, chord, deriv)
    norms = np.where(use_chord, chord_n, norms)
    tangents = deriv / np.where(norms > 0, norms, 1.0)
    distances = np.linalg.norm(points - queries, axis=1)
    return seg_idx, t_final, points, tangents, distances


def closest_point_on_chain(chain: BezierChain, q) -> ChainPoint:
    """Global closest point on the chain to ``q`` within the sampling
    tolerance (1e-4 m)."""
    seg, t, point, tangent, dist = closest_points_on_chain(chain, np.asarray(q))
    return ChainPoint(int(seg[0]), float(t[0]), point[0], tangent[0], float(dist[0]))


def plan_bezier_candidate(start: Pose, end: Pose, handle: float) -> CubicBezier:
    """Endpoint-constrained cubic: control points sit ``handle`` meters ahead
    of the start (along its heading) and behind the end (against its heading),
    so the curve's endpoint tangents equal the requested headings."""
    if not handle > 0:
        raise ValueError("handle must be positive")
    return CubicBezier(
        start.position,
        start.position + handle * start.direction,
        end.position - handle * end.direction,
        end.position,
    )
