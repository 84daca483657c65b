"""Dense ground-truth bundle shared by fitting, losses and metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cameras import Camera
from .errors import ShapeError


@dataclass(eq=False)
class GroundTruthBundle:
    """All-to-all ground truth for one sequence.

    ``points[i, j, v, u]`` is where the material point seen at pixel ``(u, v)``
    of frame ``i`` sits at frame ``j``'s time. ``correspondences`` rows are
    ``(i, u, v, j, u2, v2)`` pixel pairs sharing a material point. Rigid
    labels and primitive ids use -1 for "none".
    """

    timestamps: np.ndarray  # (N,)
    points: np.ndarray  # (N, N, H, W, 3)
    valid: np.ndarray  # (N, N, H, W) bool
    visible: np.ndarray | None = None  # (N, N, H, W) bool
    static_mask: np.ndarray | None = None  # (N, H, W) bool
    rigid_labels: np.ndarray | None = None  # (N, H, W) int
    correspondences: np.ndarray | None = None  # (K, 6) int
    focal: np.ndarray | None = None  # (N,)
    principal: np.ndarray | None = None  # (N, 2)
    quat: np.ndarray | None = None  # (N, 4) world-from-camera, xyzw
    translation: np.ndarray | None = None  # (N, 3)
    depth: np.ndarray | None = None  # (N, H, W)
    primitive_ids: np.ndarray | None = None  # (N, H, W) int
    scene_scale: float | None = None

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        self.valid = np.asarray(self.valid, dtype=bool)
        N = self.timestamps.shape[0]
        if self.points.ndim != 5 or self.points.shape[:2] != (N, N) or self.points.shape[-1] != 3:
            raise ShapeError(f"points must be (N, N, H, W, 3) with N={N}, got {self.points.shape}")
        if self.valid.shape != self.points.shape[:-1]:
            raise ShapeError("valid must be (N, N, H, W)")
        if self.visible is not None:
            self.visible = np.asarray(self.visible, dtype=bool)
        if self.static_mask is not None:
            self.static_mask = np.asarray(self.static_mask, dtype=bool)
        if self.rigid_labels is not None:
            self.rigid_labels = np.asarray(self.rigid_labels).astype(np.int64)
        if self.primitive_ids is not None:
            self.primitive_ids = np.asarray(self.primitive_ids).astype(np.int64)
        if self.correspondences is not None:
            c = np.asarray(self.correspondences).astype(np.int64).reshape(-1, 6)
            self.correspondences = c
        if self.scene_scale is None:
            self.scene_scale = self.compute_scene_scale()

    @property
    def num_frames(self) -> int:
        return self.points.shape[0]

    @property
    def height(self) -> int:
        return self.points.shape[2]

    @property
    def width(self) -> int:
        return self.points.shape[3]

    def self_points(self) -> np.ndarray:
        """Ground-truth point map of every frame at its own time, (N, H, W, 3)."""
        idx = np.arange(self.num_frames)
        return self.points[idx, idx]

    def self_valid(self) -> np.ndarray:
        idx = np.arange(self.num_frames)
        return self.valid[idx, idx]

    def compute_scene_scale(self) -> float:
        from .field import scene_scale_of

        return scene_scale_of(self.self_points(), self.self_valid())

    @property
    def has_cameras(self) -> bool:
        return self.focal is not None and self.quat is not None

    @property
    def cameras(self) -> list[Camera]:
        if not self.has_cameras:
            return []
        return [
            Camera(float(self.focal[i]), float(self.principal[i, 0]), float(self.principal[i, 1]),
                   self.quat[i], self.translation[i])
            for i in range(self.num_frames)
        ]

    def pixel_samples(self, i: int, u: int, v: int):
        """Valid ``(t_j, X_{i->j})`` samples of one pixel's trajectory."""
        ok = self.valid[i, :, v, u]
        return self.timestamps[ok], self.points[i, ok, v, u]
