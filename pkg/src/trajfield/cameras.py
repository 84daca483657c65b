"""Pinhole cameras, projection, and camera recovery from world point maps.

Camera frame: x right, y down, z forward. Pixel centers sit at integer
coordinates, so the image center of a ``W x H`` image is ``((W-1)/2, (H-1)/2)``.
Rotations are stored as unit quaternions in scalar-last order ``(x, y, z, w)``
and describe the world-from-camera pose.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import CameraEstimationError, ConfigError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Camera:
    focal: float
    cx: float
    cy: float
    quat: np.ndarray  # world-from-camera rotation, (x, y, z, w)
    translation: np.ndarray  # camera center in world coordinates

    def __post_init__(self):
        if not self.focal > 0:
            raise ConfigError("focal length must be positive")
        q = np.asarray(self.quat, dtype=float)
        n = np.linalg.norm(q)
        if abs(n - 1.0) > 1e-9:
            raise ConfigError("camera quaternion must be unit-norm")
        object.__setattr__(self, "quat", q / n)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))

    @classmethod
    def from_matrix(cls, focal, cx, cy, rotation, translation) -> "Camera":
        return cls(float(focal), float(cx), float(cy), Rotation.from_matrix(rotation).as_quat(), translation)

    @property
    def rotation(self) -> np.ndarray:
        """World-from-camera rotation matrix."""
        return Rotation.from_quat(self.quat).as_matrix()

    def to_camera(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.translation) @ self.rotation

    def project(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Pixel coordinates (..., 2) and camera-frame depth (...,) of world points."""
        Xc = self.to_camera(X)
        z = Xc[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            uv = np.stack([self.focal * Xc[..., 0] / z + self.cx, self.focal * Xc[..., 1] / z + self.cy], axis=-1)
        return uv, z

    def rays(self, u, v) -> tuple[np.ndarray, np.ndarray]:
        """World ray origin and direction for pixel coordinates.

        Directions are scaled so their camera-frame z component is 1; the ray
        parameter at a hit therefore equals the hit's depth.
        """
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        d = np.stack([(u - self.cx) / self.focal, (v - self.cy) / self.focal, np.ones_like(u)], axis=-1)
        return np.broadcast_to(self.translation, d.shape).copy(), d @ self.rotation.T

    def to_dict(self) -> dict:
        return {
            "focal": float(self.focal),
            "principal_point": [float(self.cx), float(self.cy)],
            "quat_xyzw": [float(q) for q in self.quat],
            "translation": [float(x) for x in self.translation],
        }


def look_at(eye, target, up=(0.0, 1.0, 0.0)) -> np.ndarray:
    """World-from-camera rotation for a camera at ``eye`` looking at ``target``."""
    z = np.asarray(target, float) - np.asarray(eye, float)
    z /= np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, float))
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        raise ConfigError("look-at direction parallel to the up vector")
    x /= nx
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=1)


def relative_angle_deg(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Geodesic angle between two rotation matrices, in degrees."""
    c = (np.trace(Ra.T @ Rb) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


# ---------------------------------------------------------------------------
# camera recovery


def _skew(a: np.ndarray) -> np.ndarray:
    out = np.zeros(a.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -a[..., 2], a[..., 1]
    out[..., 1, 0], out[..., 1, 2] = a[..., 2], -a[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -a[..., 1], a[..., 0]
    return out


def dlt_pose(X: np.ndarray, xn: np.ndarray, degeneracy_tol: float = 1e-7):
    """Camera-from-world ``(R, t)`` from world points and normalized image points.

    Solves the 12-parameter projective DLT on Hartley-normalized points, then
    projects the left 3x3 block onto SO(3).
    """
    if len(X) < 6:
        raise CameraEstimationError(f"need >= 6 correspondences, got {len(X)}")
    mu = X.mean(axis=0)
    spread = np.mean(np.linalg.norm(X - mu, axis=1))
    if not spread > 0:
        raise CameraEstimationError("degenerate geometry: all points coincide")
    s = np.sqrt(3.0) / spread
    Xh = np.hstack([(X - mu) * s, np.ones((len(X), 1))])
    A = np.zeros((2 * len(X), 12))
    A[0::2, 0:4] = Xh
    A[0::2, 8:12] = -xn[:, :1] * Xh
    A[1::2, 4:8] = Xh
    A[1::2, 8:12] = -xn[:, 1:2] * Xh
    _, sv, Vt = np.linalg.svd(A, full_matrices=False)
    if sv[-2] < degeneracy_tol * sv[0]:
        raise CameraEstimationError("degenerate geometry: DLT null space is not one-dimensional")
    P = Vt[-1].reshape(3, 4)
    # undo the point normalization: X_n = s (X - mu)
    T = np.eye(4)
    T[:3, :3] *= s
    T[:3, 3] = -s * mu
    P = P @ T
    if np.median(X @ P[2, :3] + P[2, 3]) < 0:
        P = -P
    U, S, Vt3 = np.linalg.svd(P[:, :3])
    d = np.sign(np.linalg.det(U @ Vt3))
    if d < 0:
        raise CameraEstimationError("DLT produced a mirrored camera")
    R = U @ Vt3
    t = P[:, 3] / S.mean()
    return R, t


def _reprojection(R, t, f, cx, cy, X, uv):
    Xc = X @ R.T + t
    proj = np.stack([f * Xc[:, 0] / Xc[:, 2] + cx, f * Xc[:, 1] / Xc[:, 2] + cy], axis=1)
    return proj - uv, Xc


def refine_pose_irls(R, t, f, cx, cy, X, uv, iters: int = 15, huber: float = 1.0):
    """Gauss-Newton on reprojection error with Huber weights (scale ``huber`` px)."""
    for _ in range(iters):
        r, Xc = _reprojection(R, t, f, cx, cy, X, uv)
        norm = np.linalg.norm(r, axis=1)
        w = np.where(norm <= huber, 1.0, huber / np.maximum(norm, 1e-300))
        x, y, z = Xc[:, 0], Xc[:, 1], Xc[:, 2]
        Jp = np.zeros((len(X), 2, 3))
        Jp[:, 0, 0] = f / z
        Jp[:, 0, 2] = -f * x / z**2
        Jp[:, 1, 1] = f / z
        Jp[:, 1, 2] = -f * y / z**2
        # left perturbation R <- exp(w) R moves Xc by -[R X]_x w
        Jw = -np.einsum("nij,njk->nik", Jp, _skew(X @ R.T))
        J = np.concatenate([Jw, Jp], axis=2)  # (n, 2, 6)
        JtW = J * w[:, None, None]
        H = np.einsum("nij,nik->jk", JtW, J)
        g = np.einsum("nij,ni->j", JtW, r)
        try:
            delta = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        R = Rotation.from_rotvec(delta[:3]).as_matrix() @ R
        t = t + delta[3:]
        if np.linalg.norm(delta) < 1e-14:
            break
    return R, t


def _pose_for_focal(f, cx, cy, X, uv):
    xn = np.stack([(uv[:, 0] - cx) / f, (uv[:, 1] - cy) / f], axis=1)
    R, t = dlt_pose(X, xn)
    R, t = refine_pose_irls(R, t, f, cx, cy, X, uv)
    r, Xc = _reprojection(R, t, f, cx, cy, X, uv)
    err = np.linalg.norm(r, axis=1)
    if not np.all(np.isfinite(err)):
        return R, t, np.inf
    return R, t, float(np.median(err))


def estimate_camera(points: np.ndarray, pixels: np.ndarray, width: int, height: int,
                    grid_size: int = 25, tol: float = 1e-6) -> tuple[Camera, float]:
    """Recover focal length and pose from 2D-3D correspondences.

    Coarse log-spaced focal grid over ``[0.2, 5] * width``, then golden-section
    refinement of log-focal around the best grid cell. Each candidate focal
    gets a DLT pose refined by IRLS; the score is the median reprojection
    error. Returns the camera and its median error in pixels.
    """
    X = np.asarray(points, float)
    uv = np.asarray(pixels, float)
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    grid = np.geomspace(0.2 * width, 5.0 * width, grid_size)
    scores = []
    for f in grid:
        try:
            scores.append(_pose_for_focal(f, cx, cy, X, uv)[2])
        except CameraEstimationError as exc:
            if "degenerate" in str(exc):
                raise
            scores.append(np.inf)
    k = int(np.argmin(scores))
    if not np.isfinite(scores[k]):
        raise CameraEstimationError("no focal candidate produced a valid pose")

    def score(logf):
        try:
            return _pose_for_focal(np.exp(logf), cx, cy, X, uv)[2]
        except CameraEstimationError:
            return np.inf

    a = np.log(grid[max(k - 1, 0)])
    b = np.log(grid[min(k + 1, grid_size - 1)])
    g = (np.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = score(c), score(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = score(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = score(d)
    f = float(np.exp(0.5 * (a + b)))
    R, t, err = _pose_for_focal(f, cx, cy, X, uv)
    if scores[k] < err:
        f = float(grid[k])
        R, t, err = _pose_for_focal(f, cx, cy, X, uv)
    return Camera.from_matrix(f, cx, cy, R.T, -R.T @ t), err


def _subsample(n: int, max_points: int) -> np.ndarray:
    if n <= max_points:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, max_points).round().astype(int))


def estimate_cameras(field, max_points: int = 1000) -> list[Camera | None]:
    """Per-frame cameras from a field's self point maps.

    Frames whose geometry is degenerate come back as ``None`` (and are
    logged); the remaining frames are still estimated.
    """
    from .field import self_point_maps

    maps = self_point_maps(field)
    H, W = field.height, field.width
    vv, uu = np.mgrid[0:H, 0:W]
    cams: list[Camera | None] = []
    for i in range(field.num_frames):
        ok = field.valid[i] & np.all(np.isfinite(maps[i]), axis=-1)
        X = maps[i][ok]
        uv = np.stack([uu[ok], vv[ok]], axis=1).astype(float)
        idx = _subsample(len(X), max_points)
        try:
            cam, _ = estimate_camera(X[idx], uv[idx], W, H)
        except CameraEstimationError as exc:
            log.warning("frame %d: camera estimation failed: %s", i, exc)
            cam = None
        cams.append(cam)
    return cams
