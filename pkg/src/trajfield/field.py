"""Trajectory-field container and point-map queries.

A field stores, for every frame ``i`` and pixel ``(u, v)``, the ``D`` control
points of a 3D trajectory over normalized time. Control points are laid out
as ``(N, D, H, W, 3)``; confidences as ``(N, D, H, W)``.

Pixel convention: ``u`` is the column and ``v`` the row, origin top-left, so
a pixel ``(u, v)`` lives at array index ``[..., v, u]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .curves import CurveSpec, basis_matrix
from .errors import ConfigError, FieldIndexError, ShapeError


def default_timestamps(num_frames: int) -> np.ndarray:
    """Uniform frame times ``i / (N - 1)``."""
    if num_frames < 2:
        raise ConfigError(f"need at least 2 frames for timestamps, got {num_frames}")
    return np.arange(num_frames) / (num_frames - 1)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PointMap:
    points: np.ndarray  # (H, W, 3) world coordinates
    valid: np.ndarray  # (H, W) bool


@dataclass(frozen=True, eq=False)
class TrajectoryField:
    """Per-frame control-point grids with confidences and frame timestamps.

    Arrays are copied to float64 and made read-only on construction.
    ``valid`` marks pixels that carry a trajectory; it defaults to all true.
    ``info`` holds free-form provenance (e.g. the fit residual).
    """

    spec: CurveSpec
    control_points: np.ndarray
    confidences: np.ndarray | None = None
    timestamps: np.ndarray | None = None
    valid: np.ndarray | None = None
    info: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        P = np.array(self.control_points, dtype=float)
        if P.ndim != 5 or P.shape[1] != self.spec.num_control_points or P.shape[-1] != 3:
            raise ShapeError(
                f"control points must be (N, {self.spec.num_control_points}, H, W, 3), got {P.shape}"
            )
        if not np.all(np.isfinite(P)):
            raise ConfigError("control points must be finite")
        N = P.shape[0]
        C = np.ones(P.shape[:-1]) if self.confidences is None else np.array(self.confidences, dtype=float)
        if C.shape != P.shape[:-1]:
            raise ShapeError(f"confidences must be {P.shape[:-1]}, got {C.shape}")
        if not np.all(C > 0):
            raise ConfigError("confidences must be strictly positive")
        ts = default_timestamps(N) if self.timestamps is None else np.array(self.timestamps, dtype=float)
        if ts.shape != (N,):
            raise ShapeError(f"expected {N} timestamps, got shape {ts.shape}")
        if N >= 2 and (ts[0] != 0.0 or ts[-1] != 1.0 or np.any(np.diff(ts) <= 0)):
            raise ConfigError("timestamps must increase strictly from 0 to 1")
        valid = np.ones((N,) + P.shape[2:4], bool) if self.valid is None else np.array(self.valid, dtype=bool)
        if valid.shape != (N,) + P.shape[2:4]:
            raise ShapeError("valid mask must be (N, H, W)")
        object.__setattr__(self, "control_points", _readonly(P))
        object.__setattr__(self, "confidences", _readonly(C))
        object.__setattr__(self, "timestamps", _readonly(ts))
        object.__setattr__(self, "valid", _readonly(valid))

    @property
    def num_frames(self) -> int:
        return self.control_points.shape[0]

    @property
    def height(self) -> int:
        return self.control_points.shape[2]

    @property
    def width(self) -> int:
        return self.control_points.shape[3]

    def replace(self, **changes) -> "TrajectoryField":
        kw = dict(
            spec=self.spec,
            control_points=self.control_points,
            confidences=self.confidences,
            timestamps=self.timestamps,
            valid=self.valid,
            info=dict(self.info),
        )
        kw.update(changes)
        return TrajectoryField(**kw)

    def _check_frame(self, i: int) -> int:
        if not 0 <= i < self.num_frames:
            raise FieldIndexError(f"frame {i} out of range [0, {self.num_frames})")
        return int(i)

    def _check_pixel(self, u: int, v: int):
        if not (0 <= u < self.width and 0 <= v < self.height):
            raise FieldIndexError(f"pixel ({u}, {v}) outside {self.width}x{self.height} image")


def pixel_control_points(field: TrajectoryField, i: int, u: int, v: int) -> np.ndarray:
    """The (D, 3) control points of pixel ``(u, v)`` in frame ``i``."""
    i = field._check_frame(i)
    field._check_pixel(u, v)
    return field.control_points[i, :, v, u, :]


def query_trajectory(field: TrajectoryField, i: int, u: int, v: int, t: float) -> np.ndarray:
    """Position of pixel ``(u, v)`` of frame ``i`` at time ``t``."""
    P = pixel_control_points(field, i, u, v)
    return np.einsum("dc,d->c", P, basis_matrix(field.spec, t)[0])


def _positions(P: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # P: (..., D, H, W, 3); weights: (M, D) -> (..., M, H, W, 3)
    return np.einsum("md,...dhwc->...mhwc", weights, P)


def cross_frame_points(field: TrajectoryField, sources=None) -> np.ndarray:
    """All cross-frame maps at once: ``X[i, j] = x_{i,u,v}(t_j)``, shape (n_src, N, H, W, 3)."""
    P = field.control_points if sources is None else field.control_points[np.asarray(sources)]
    return _positions(P, basis_matrix(field.spec, field.timestamps))


def query_cross_frame(field: TrajectoryField, i: int, j: int) -> PointMap:
    """Point map of frame ``i``'s pixels at frame ``j``'s acquisition time."""
    i = field._check_frame(i)
    j = field._check_frame(j)
    w = basis_matrix(field.spec, field.timestamps[j])
    pts = _positions(field.control_points[i], w)[0]
    return PointMap(pts, field.valid[i].copy())


def self_point_map(field: TrajectoryField, i: int) -> PointMap:
    return query_cross_frame(field, i, i)


def self_point_maps(field: TrajectoryField) -> np.ndarray:
    """Every frame's own point map, shape (N, H, W, 3)."""
    W = basis_matrix(field.spec, field.timestamps)
    return np.einsum("nd,ndhwc->nhwc", W, field.control_points)


def aggregate_confidence(field: TrajectoryField, i: int, u: int, v: int, t: float) -> float:
    """Per-pixel confidence at time ``t`` blended with the curve basis."""
    i = field._check_frame(i)
    field._check_pixel(u, v)
    c = field.confidences[i, :, v, u]
    return float(c @ basis_matrix(field.spec, t)[0])


def control_point_variance(P: np.ndarray, axis: int = 1) -> np.ndarray:
    """Mean squared distance of control points to their centroid.

    ``P`` holds control points along ``axis`` and xyz on the last axis; the
    result drops both. This is the trace of the population covariance.
    """
    dev = P - P.mean(axis=axis, keepdims=True)
    return (dev ** 2).sum(axis=-1).mean(axis=axis)


def scene_scale_of(points: np.ndarray, valid: np.ndarray | None = None) -> float:
    """Bounding-box diagonal of a point cloud."""
    pts = points.reshape(-1, 3)
    if valid is not None:
        pts = pts[np.asarray(valid).reshape(-1)]
    if len(pts) == 0:
        return 0.0
    return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
