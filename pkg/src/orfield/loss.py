"""Wrapped angular offset between orientation rasters.

The residual convention here (wrap the raw difference into [-pi, pi] through
a [0, 2pi) modulus) is shared by the planner energies and the evaluation
metrics, so it lives in one place.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import OrField, ScalarGrid

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class AngleTriple:
    """Label angle, initial-field angle (both in [-pi, pi]) and a predicted
    offset in unbounded radians."""

    theta_n: float
    theta_d: float
    delta_theta: float

    def __post_init__(self):
        vals = (self.theta_n, self.theta_d, self.delta_theta)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("angles must be finite")
        if abs(self.theta_n) > np.pi or abs(self.theta_d) > np.pi:
            raise ValueError("theta_n and theta_d must lie in [-pi, pi]")


def wrap_residuals(theta_n, theta_d, delta_theta=0.0) -> np.ndarray:
    """Vectorized residual l: r = (theta_n - (theta_d + delta)) mod 2pi,
    then l = r - 2pi where r > pi, else l = r. |l| is the minimal angular
    distance; the boundary r = pi stays at +pi."""
    r = np.mod(np.asarray(theta_n) - (np.asarray(theta_d) + delta_theta), TWO_PI)
    return np.where(r > np.pi, r - TWO_PI, r)


def angular_residual(t: AngleTriple) -> float:
    return float(wrap_residuals(t.theta_n, t.theta_d, t.delta_theta))


def _check_same_geometry(*grids):
    first = grids[0].geometry
    for g in grids[1:]:
        if g.geometry != first:
            raise ValueError("rasters must share one geometry")


def field_loss(label: OrField, initial: OrField, offsets: ScalarGrid) -> float:
    """Sum of |residual| over cells where both fields carry an orientation.

    Cells with a zero vector on either side are skipped: the target is only
    defined where both orientations exist.
    """
    _check_same_geometry(label, initial, offsets)
    mask = (label.norms() > 0) & (initial.norms() > 0)
    res = wrap_residuals(
        label.angles()[mask], initial.angles()[mask], offsets.values[mask]
    )
    return float(np.abs(res).sum())


def apply_offsets(initial: OrField, offsets: ScalarGrid) -> OrField:
    """Rotate each nonzero initial vector by its offset, producing unit
    vectors (cos, sin)(theta_d + delta); zero vectors pass through."""
    _check_same_geometry(initial, offsets)
    theta = initial.angles() + offsets.values
    out = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    nonzero = (initial.norms() > 0)[..., None]
    return OrField(initial.geometry, np.where(nonzero, out, initial.vectors))
