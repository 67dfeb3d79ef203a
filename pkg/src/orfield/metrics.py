"""Trajectory evaluation: displacement errors, hit/coverage and the
circle-based sampling that matches planned and ground-truth trajectories."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import OccupancyGrid, world_to_cell
from .planners import Trajectory


@dataclass(frozen=True, eq=False)
class CircleSamples:
    """First crossing of each sampling circle, plus the radii never reached."""

    points: np.ndarray  # (K, 2)
    radii: np.ndarray  # (K,)
    missed: tuple


@dataclass(frozen=True, eq=False)
class SampledPair:
    """Ground-truth and planned points matched by sampling circle index."""

    truth: np.ndarray
    planned: np.ndarray

    def __post_init__(self):
        truth = np.asarray(self.truth, dtype=np.float64).reshape(-1, 2)
        planned = np.asarray(self.planned, dtype=np.float64).reshape(-1, 2)
        if len(truth) != len(planned) or len(truth) < 1:
            raise ValueError("pair needs equal, nonempty point sequences")
        object.__setattr__(self, "truth", truth)
        object.__setattr__(self, "planned", planned)

    def offsets(self) -> np.ndarray:
        return np.linalg.norm(self.truth - self.planned, axis=1)


def sample_by_circles(traj: Trajectory, origin, radii) -> CircleSamples:
    """For each radius, the first point (by arc length) where the linearly
    interpolated trajectory crosses the circle of that radius about
    ``origin``. Radii must be strictly increasing; unreachable radii are
    reported in ``missed``."""
    radii = np.asarray(radii, dtype=np.float64)
    if len(radii) == 0 or radii[0] <= 0 or (np.diff(radii) <= 0).any():
        raise ValueError("radii must be strictly increasing and positive")
    origin = np.asarray(origin, dtype=np.float64)
    pts = traj.positions
    starts = pts[:-1] - origin
    deltas = np.diff(pts, axis=0)
    aa = (deltas**2).sum(axis=1)
    ab = (starts * deltas).sum(axis=1)
    bb = (starts**2).sum(axis=1)

    found, found_r, missed = [], [], []
    for r in radii:
        hit = None
        for s in range(len(deltas)):
            # |start + t*delta|^2 = r^2 on t in [0, 1]
            c = bb[s] - r * r
            if aa[s] == 0.0:
                continue
            disc = ab[s] * ab[s] - aa[s] * c
            if disc < 0:
                continue
            sq = np.sqrt(disc)
            for t in ((-ab[s] - sq) / aa[s], (-ab[s] + sq) / aa[s]):
                if 0.0 <= t <= 1.0:
                    hit = pts[s] + t * deltas[s]
                    break
            if hit is not None:
                break
        if hit is None:
            missed.append(float(r))
        else:
            found.append(hit)
            found_r.append(float(r))
    points = np.array(found).reshape(-1, 2)
    return CircleSamples(points, np.array(found_r), tuple(missed))


def paired_circle_samples(
    truth: Trajectory, planned: Trajectory, origin, radii
) -> SampledPair:
    """Sample both trajectories on the same circles and pair the radii both
    of them reach."""
    ts = sample_by_circles(truth, origin, radii)
    ps = sample_by_circles(planned, origin, radii)
    common = sorted(set(ts.radii.tolist()) & set(ps.radii.tolist()))
    if not common:
        raise ValueError("no sampling radius reached by both trajectories")
    ti = [ts.radii.tolist().index(r) for r in common]
    pi = [ps.radii.tolist().index(r) for r in common]
    return SampledPair(ts.points[ti], ps.points[pi])


def ade(s: SampledPair) -> float:
    """Mean point-to-point displacement."""
    return float(s.offsets().mean())


def fde(s: SampledPair) -> float:
    """Displacement of the last sampled pair."""
    return float(s.offsets()[-1])


def hit_rate(s: SampledPair, d: float) -> int:
    """1 iff every offset is strictly below d."""
    if d <= 0:
        raise ValueError("threshold must be positive")
    return int(s.offsets().max() < d)


def coverage(s: SampledPair, d: float) -> float:
    """Fraction of offsets strictly below d (a soft hit rate)."""
    if d <= 0:
        raise ValueError("threshold must be positive")
    return float((s.offsets() < d).mean())


@dataclass(frozen=True)
class FusionConfig:
    """Prior prediction variance: base plus quadratic growth in lookahead."""

    base_variance: float = 0.25
    variance_growth: float = 0.01

    def __post_init__(self):
        if self.base_variance <= 0:
            raise ValueError("base_variance must be positive")
        if self.variance_growth < 0:
            raise ValueError("variance_growth must be >= 0")


def fuse_waypoints(predictions, cfg: FusionConfig = FusionConfig()) -> np.ndarray:
    """Inverse-variance weighted mean of waypoint predictions.

    ``predictions`` is a sequence of (source pose, waypoint, lookahead in
    meters); the variance grows quadratically with lookahead and the weights
    are normalized to sum to one.
    """
    preds = list(predictions)
    if not preds:
        raise ValueError("need at least one prediction")
    points = np.stack([np.asarray(p[1], dtype=np.float64) for p in preds])
    lookahead = np.array([float(p[2]) for p in preds])
    weights = 1.0 / (cfg.base_variance + cfg.variance_growth * lookahead**2)
    weights = weights / weights.sum()
    return (points * weights[:, None]).sum(axis=0)


def online_coverage(
    reference: Trajectory, driven: Trajectory, r: float, dedup: float
) -> float:
    """Coverage of a reference traversal by a driven one: reference points
    are thinned so no two retained points lie within ``dedup`` of each other;
    a retained point counts as covered when some driven pose comes within
    ``r`` of it."""
    if r <= 0 or dedup <= 0:
        raise ValueError("r and dedup must be positive")
    retained = []
    for p in reference.positions:
        if all(np.linalg.norm(p - q) >= dedup for q in retained):
            retained.append(p)
    retained = np.stack(retained)
    driven_pts = driven.positions
    d2 = ((retained[:, None, :] - driven_pts[None, :, :]) ** 2).sum(axis=2)
    covered = (d2.min(axis=1) <= r * r).sum()
    return float(covered / len(retained))


def in_free_space_fraction(traj: Trajectory, occ: OccupancyGrid) -> float:
    """Fraction of trajectory poses whose cell is free; poses outside the
    raster count as not free."""
    free = occ.free_mask()
    hits = 0
    for p in traj.positions:
        cell = world_to_cell(occ.geometry, p)
        if cell is not None and free[cell[1], cell[0]]:
            hits += 1
    return hits / len(traj.positions)
