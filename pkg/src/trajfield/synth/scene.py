"""Analytic scenes: primitives with time-parameterized motion and a camera path.

A primitive is defined in its rest frame. At time ``t`` its rest-frame
points are first scaled radially about the rest center by the pulsation
``s(t) = 1 + a * sin(2 pi f t)`` (spheres only), then moved by the rigid
motion ``x = R(t) p + T(t)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.spatial.transform import Rotation

from ..cameras import Camera, look_at
from ..curves import curve_spec, eval_curve
from ..errors import ConfigError

EPS_DEPTH = 1e-9


@dataclass(frozen=True, eq=False)
class Motion:
    """Rigid motion: translation along a clamped cubic B-spline, rotation about a fixed axis.

    The rotation path is the unit quaternion ``q_base * exp(theta(t) axis / 2)``
    with ``theta(t) = angle0 + angle_rate * t``.
    """

    translation_points: np.ndarray | None = None  # (K, 3), K in {4, 7, 10}
    axis: tuple = (0.0, 1.0, 0.0)
    angle0: float = 0.0
    angle_rate: float = 0.0

    def __post_init__(self):
        if self.translation_points is not None:
            pts = np.asarray(self.translation_points, float)
            object.__setattr__(self, "translation_points", pts)
            object.__setattr__(self, "_spec", curve_spec("bspline", len(pts)))
        a = np.asarray(self.axis, float)
        object.__setattr__(self, "axis", tuple(a / np.linalg.norm(a)))

    def quaternion(self, t: float) -> np.ndarray:
        theta = self.angle0 + self.angle_rate * t
        return Rotation.from_rotvec(theta * np.asarray(self.axis)).as_quat()

    def rotation(self, t: float) -> np.ndarray:
        theta = self.angle0 + self.angle_rate * t
        return Rotation.from_rotvec(theta * np.asarray(self.axis)).as_matrix()

    def translation(self, t: float) -> np.ndarray:
        if self.translation_points is None:
            return np.zeros(3)
        return eval_curve(self.translation_points, self._spec, t)


@dataclass(frozen=True, eq=False)
class Primitive:
    """One analytic shape.

    ``shape`` is ``"sphere"`` (params: center, radius), ``"box"`` (center,
    half_extents) or ``"plane"`` (point, normal). ``segment_id`` groups
    primitives into rigid segments; non-rigid primitives are excluded from
    rigid labels automatically.
    """

    shape: str
    params: dict
    motion: Motion | None = None
    pulse_amplitude: float = 0.0
    pulse_frequency: float = 1.0
    segment_id: int = 0
    is_static: bool = True
    name: str = ""

    def __post_init__(self):
        p = self.params
        if self.shape == "sphere":
            if not p["radius"] > 0:
                raise ConfigError("sphere radius must be positive")
        elif self.shape == "box":
            if np.any(np.asarray(p["half_extents"]) <= 0):
                raise ConfigError("box half-extents must be positive")
        elif self.shape == "plane":
            n = np.asarray(p["normal"], float)
            self.params["normal"] = n / np.linalg.norm(n)
        else:
            raise ConfigError(f"unknown primitive shape {self.shape!r}")
        if self.pulse_amplitude and self.shape != "sphere":
            raise ConfigError("pulsation is only defined for spheres")
        if abs(self.pulse_amplitude) >= 1:
            raise ConfigError("pulse amplitude must be < 1")
        if self.is_static and (self.motion is not None or self.pulse_amplitude):
            raise ConfigError("static primitives cannot move")

    @property
    def is_rigid(self) -> bool:
        return self.pulse_amplitude == 0.0

    @property
    def rest_center(self) -> np.ndarray:
        return np.asarray(self.params.get("center", self.params.get("point")), float)

    def pulse(self, t: float) -> float:
        if not self.pulse_amplitude:
            return 1.0
        return 1.0 + self.pulse_amplitude * np.sin(2.0 * np.pi * self.pulse_frequency * t)

    def pose(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        if self.motion is None:
            return np.eye(3), np.zeros(3)
        return self.motion.rotation(t), self.motion.translation(t)

    def to_world(self, material: np.ndarray, t: float) -> np.ndarray:
        """Push rest-frame material points to world coordinates at time ``t``."""
        if self.is_static:
            return np.array(material, float)
        c = self.rest_center
        p = c + self.pulse(t) * (material - c)
        R, T = self.pose(t)
        return p @ R.T + T

    def to_material(self, world: np.ndarray, t: float) -> np.ndarray:
        if self.is_static:
            return np.array(world, float)
        R, T = self.pose(t)
        p = (world - T) @ R
        c = self.rest_center
        return c + (p - c) / self.pulse(t)

    def intersect(self, origins: np.ndarray, dirs: np.ndarray, t: float) -> np.ndarray:
        """Ray parameter of the nearest hit beyond ``EPS_DEPTH``; ``inf`` on a miss."""
        if self.motion is not None:
            R, T = self.pose(t)
            o = (origins - T) @ R
            d = dirs @ R
        else:
            o, d = origins, dirs
        if self.shape == "sphere":
            return _hit_sphere(o, d, self.rest_center, self.params["radius"] * self.pulse(t))
        if self.shape == "box":
            return _hit_box(o, d, self.rest_center, np.asarray(self.params["half_extents"], float))
        return _hit_plane(o, d, self.rest_center, self.params["normal"])


def _hit_sphere(o, d, c, r):
    oc = o - c
    a = np.einsum("ij,ij->i", d, d)
    b = 2.0 * np.einsum("ij,ij->i", d, oc)
    cc = np.einsum("ij,ij->i", oc, oc) - r * r
    disc = b * b - 4.0 * a * cc
    out = np.full(len(o), np.inf)
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    # numerically stable roots
    q = -0.5 * (b + np.where(b >= 0, sq, -sq))
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = q / a
        r2 = np.where(q != 0, cc / q, -b / (2 * a))
    lo, hi = np.minimum(r1, r2), np.maximum(r1, r2)
    hit = np.where(lo > EPS_DEPTH, lo, np.where(hi > EPS_DEPTH, hi, np.inf))
    out[ok] = hit[ok]
    return out


def _hit_box(o, d, c, h):
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (c - h - o) * inv
        t2 = (c + h - o) * inv
    t1 = np.where(np.isnan(t1), -np.inf, t1)
    t2 = np.where(np.isnan(t2), np.inf, t2)
    tmin = np.minimum(t1, t2).max(axis=1)
    tmax = np.maximum(t1, t2).min(axis=1)
    hit = np.where(tmin > EPS_DEPTH, tmin, tmax)
    return np.where((tmax >= tmin) & (hit > EPS_DEPTH), hit, np.inf)


def _hit_plane(o, d, p, n):
    denom = d @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = ((p - o) @ n) / denom
    return np.where((np.abs(denom) > 1e-15) & (lam > EPS_DEPTH), lam, np.inf)


@dataclass(frozen=True, eq=False)
class CameraPath:
    """Pinhole camera over time.

    ``look_at`` mode: the eye follows a clamped cubic B-spline through
    ``eye_points`` and looks at ``target``. ``attached`` mode: the camera
    rides rigidly on primitive ``follow`` starting from the look-at pose at
    ``t = 0``. Focal length is ``focal_factor * width`` pixels.
    """

    eye_points: np.ndarray
    target: tuple
    focal_factor: float = 1.0
    follow: int | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.eye_points, float))
        object.__setattr__(self, "eye_points", pts)
        if not self.focal_factor > 0:
            raise ConfigError("focal factor must be positive")

    def eye(self, t: float) -> np.ndarray:
        if len(self.eye_points) == 1:
            return self.eye_points[0].copy()
        return eval_curve(self.eye_points, curve_spec("bspline", len(self.eye_points)), t)

    def pose(self, t: float, primitives) -> tuple[np.ndarray, np.ndarray]:
        if self.follow is None:
            eye = self.eye(t)
            return look_at(eye, self.target), eye
        R0, C0 = look_at(self.eye(0.0), self.target), self.eye(0.0)
        prim = primitives[self.follow]
        Ra, Ta = prim.pose(0.0)
        Rt, Tt = prim.pose(t)
        M = Rt @ Ra.T
        return M @ R0, M @ (C0 - Ta) + Tt

    def camera(self, t: float, height: int, width: int, primitives) -> Camera:
        R, C = self.pose(t, primitives)
        return Camera.from_matrix(self.focal_factor * width, (width - 1) / 2.0, (height - 1) / 2.0, R, C)


@dataclass(frozen=True, eq=False)
class Scene:
    primitives: list
    camera_path: CameraPath
    preset: str = "custom"
    seed: int = 0
    meta: dict = dc_field(default_factory=dict)

    def camera(self, t: float, height: int, width: int) -> Camera:
        return self.camera_path.camera(t, height, width, self.primitives)


@dataclass
class Hit:
    primitive: np.ndarray  # (M,) int, -1 on a miss
    material: np.ndarray  # (M, 3)
    point: np.ndarray  # (M, 3)
    depth: np.ndarray  # (M,) camera-frame z; inf on a miss


def cast_rays(scene: Scene, t: float, origins: np.ndarray, dirs: np.ndarray) -> Hit:
    """Nearest hit of each ray among all primitives at time ``t``."""
    lam = np.stack([p.intersect(origins, dirs, t) for p in scene.primitives], axis=1)
    best = np.argmin(lam, axis=1)
    depth = lam[np.arange(len(lam)), best]
    miss = ~np.isfinite(depth)
    prim = np.where(miss, -1, best)
    point = origins + np.where(miss, 0.0, depth)[:, None] * dirs
    material = np.zeros_like(point)
    for k, p in enumerate(scene.primitives):
        sel = prim == k
        if sel.any():
            material[sel] = p.to_material(point[sel], t)
    return Hit(prim, material, point, depth)


def ray_cast(scene: Scene, t: float, camera: Camera, u, v) -> Hit:
    """Cast the rays of pixel coordinates ``(u, v)`` (scalars or arrays)."""
    u = np.atleast_1d(np.asarray(u, float)).ravel()
    v = np.atleast_1d(np.asarray(v, float)).ravel()
    o, d = camera.rays(u, v)
    return cast_rays(scene, t, o, d)


def material_trajectory(scene: Scene, primitive: int, material: np.ndarray, t: float) -> np.ndarray:
    """World position of material point(s) on ``primitive`` at time ``t``."""
    return scene.primitives[primitive].to_world(np.asarray(material, float), t)
