"""Trajectory fields: per-pixel spline trajectories for dynamic 3D scenes."""

__version__ = "0.1.0"

from .bundle import GroundTruthBundle
from .cameras import Camera
from .curves import CurveSpec, basis_eval, basis_derivative, curve_spec, eval_curve, eval_curve_velocity, make_knot_vector
from .field import (
    PointMap,
    TrajectoryField,
    aggregate_confidence,
    default_timestamps,
    query_cross_frame,
    query_trajectory,
    self_point_map,
)
from .fitting import fit_field, fit_pixel

__all__ = [
    "Camera", "CurveSpec", "GroundTruthBundle", "PointMap", "TrajectoryField",
    "aggregate_confidence", "basis_derivative", "basis_eval", "curve_spec", "default_timestamps",
    "eval_curve", "eval_curve_velocity", "fit_field", "fit_pixel", "make_knot_vector",
    "query_cross_frame", "query_trajectory", "self_point_map",
]
