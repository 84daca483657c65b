"""Products derived from a trajectory field.

2D trajectories, dynamic masks, scene flow, first-order forecasting and
fusion into a common frame. Camera recovery lives in :mod:`trajfield.cameras`.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .cameras import Camera, estimate_cameras  # noqa: F401  (re-exported)
from .curves import basis_derivative, basis_matrix, eval_curve, eval_curve_velocity
from .errors import ConfigError, InputError
from .field import TrajectoryField, control_point_variance, pixel_control_points, query_cross_frame, scene_scale_of, self_point_maps


def project_2d(field: TrajectoryField, cameras: list[Camera], i: int, u: int, v: int, samples: int = 16):
    """Project one pixel's trajectory into the images.

    Each of ``samples`` uniform times uses the camera of the frame with the
    nearest timestamp. Returns ``(t (S,), pixels (S, 2), in_front (S,))``;
    points at or behind the camera plane are flagged rather than raised.
    """
    if samples < 2:
        raise ConfigError("need at least 2 samples")
    ts = np.linspace(0.0, 1.0, samples)
    X = pixel_control_points(field, i, u, v)
    pts = np.einsum("md,dc->mc", basis_matrix(field.spec, ts), X)
    nearest = np.abs(ts[:, None] - field.timestamps[None, :]).argmin(axis=1)
    pix = np.zeros((samples, 2))
    front = np.zeros(samples, bool)
    for k, (p, j) in enumerate(zip(pts, nearest)):
        uv, z = cameras[j].project(p)
        front[k] = z > 0
        pix[k] = uv if front[k] else np.nan
    return ts, pix, front


def dynamic_mask(field: TrajectoryField, threshold: float | None = None) -> np.ndarray:
    """Pixels whose control-point variance exceeds ``threshold``; (N, H, W) bool.

    Default threshold is ``1e-4 * scene_scale**2`` with the scale taken from
    the field's own self point maps.
    """
    if threshold is None:
        threshold = default_mask_threshold(field)
    if not threshold > 0:
        raise ConfigError("threshold must be positive")
    var = control_point_variance(field.control_points, axis=1)
    return (var > threshold) & field.valid


def default_mask_threshold(field: TrajectoryField) -> float:
    scale = scene_scale_of(self_point_maps(field), field.valid)
    return 1e-4 * scale**2 if scale > 0 else 1e-12


def scene_flow(field: TrajectoryField, i: int) -> np.ndarray:
    """Endpoint displacement ``P[D-1] - P[0]`` of every pixel in frame ``i``; (H, W, 3)."""
    i = field._check_frame(i)
    P = field.control_points[i]
    if field.spec.is_clamped:
        return P[-1] - P[0]
    return query_cross_frame(field, i, field.num_frames - 1).points - query_cross_frame(field, i, 0).points


def forecast(field: TrajectoryField, i: int, u: int, v: int, dt: float) -> np.ndarray:
    """Tangent continuation beyond the last time: ``x(1) + dt * x'(1)``."""
    if dt < 0:
        raise ConfigError("dt must be non-negative")
    P = pixel_control_points(field, i, u, v)
    return eval_curve(P, field.spec, 1.0) + dt * eval_curve_velocity(P, field.spec, 1.0)


def forecast_frame(field: TrajectoryField, i: int, dt: float) -> np.ndarray:
    """:func:`forecast` for every pixel of frame ``i``; (H, W, 3)."""
    if dt < 0:
        raise ConfigError("dt must be non-negative")
    P = field.control_points[field._check_frame(i)]
    w = basis_matrix(field.spec, 1.0)[0]
    dw = basis_derivative(field.spec, 1.0)
    return np.einsum("d,dhwc->hwc", w, P) + dt * np.einsum("d,dhwc->hwc", dw, P)


def fuse_canonical(field: TrajectoryField, j: int, source_frames) -> tuple[np.ndarray, np.ndarray]:
    """Bring pixels of several source frames to frame ``j``'s time.

    Returns ``(points (M, 3), labels (M, 3))`` with label rows ``(i, u, v)``;
    invalid pixels are dropped.
    """
    sources = sorted(set(int(s) for s in source_frames))
    if not sources:
        raise InputError("empty source frame set")
    pts, labels = [], []
    for i in sources:
        pm = query_cross_frame(field, i, j)
        v, u = np.nonzero(pm.valid)
        pts.append(pm.points[v, u])
        labels.append(np.stack([np.full(u.size, i), u, v], axis=1))
    return np.concatenate(pts), np.concatenate(labels)


# ---------------------------------------------------------------------------
# writers


def write_ply(path, points: np.ndarray, labels: np.ndarray | None = None) -> None:
    """ASCII PLY with float xyz and optional int ``frame u v`` properties."""
    points = np.asarray(points, float).reshape(-1, 3)
    header = ["ply", "format ascii 1.0", f"element vertex {len(points)}",
              "property float x", "property float y", "property float z"]
    if labels is not None:
        header += ["property int frame", "property int u", "property int v"]
    header.append("end_header")
    rows = []
    for k, p in enumerate(points):
        row = f"{p[0]:.7g} {p[1]:.7g} {p[2]:.7g}"
        if labels is not None:
            row += " {} {} {}".format(*(int(x) for x in labels[k]))
        rows.append(row)
    Path(path).write_text("\n".join(header + rows) + "\n")


def write_pgm(path, mask: np.ndarray) -> None:
    """Binary PGM (P5), 255 for true pixels."""
    m = np.asarray(mask, bool)
    H, W = m.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{W} {H}\n255\n".encode())
        fh.write((m.astype(np.uint8) * 255).tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    W, H = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(H, W) > 0
