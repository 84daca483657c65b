"""Evaluation metrics for trajectory fields.

All metrics take raw (unscaled) values. EPE is the mean unsquared distance
between predicted and ground-truth cross-frame positions over valid
``(i, j, u, v)``. SDD is the mean temporal RMS spread of static pixels'
trajectories at the frame timestamps. CA is the mean distance between
trajectories of ground-truth-corresponding pixels, also at the frame
timestamps. APD/AJ follow the TAP-Vid-3D idea with fixed thresholds that are
multiples of the scene scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import GroundTruthBundle
from .cameras import Camera
from .curves import basis_matrix
from .errors import AlignmentError, MetricError, ShapeError
from .field import TrajectoryField, cross_frame_points, self_point_maps

APD_FRACTIONS = (0.05, 0.1, 0.2, 0.4, 0.8)
VISIBILITY_FRACTION = 0.05


@dataclass(frozen=True)
class Sim3:
    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return self.scale * (X @ self.rotation.T) + self.translation

    def to_dict(self) -> dict:
        return {"scale": float(self.scale), "rotation": self.rotation.tolist(),
                "translation": self.translation.tolist()}


def sim3_align(pred_points, gt_points, valid_mask=None) -> Sim3:
    """Similarity ``(s, R, T)`` minimizing ``sum |s R p + T - g|^2`` (Umeyama).

    Maps predictions onto ground truth; ``det(R) = +1``.
    """
    p = np.asarray(pred_points, float).reshape(-1, 3)
    g = np.asarray(gt_points, float).reshape(-1, 3)
    if valid_mask is not None:
        m = np.asarray(valid_mask, bool).reshape(-1)
        p, g = p[m], g[m]
    if len(p) < 3:
        raise AlignmentError(f"need at least 3 point pairs, got {len(p)}")
    mp, mg = p.mean(axis=0), g.mean(axis=0)
    pc, gc = p - mp, g - mg
    var_p = (pc**2).sum() / len(p)
    cov = gc.T @ pc / len(p)
    U, S, Vt = np.linalg.svd(cov)
    sp = np.linalg.svd(pc, compute_uv=False)
    if var_p <= 0 or sp[1] <= 1e-10 * sp[0]:
        raise AlignmentError("degenerate configuration (points collinear or coincident)")
    d = np.ones(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        d[2] = -1.0
    R = U @ np.diag(d) @ Vt
    s = float((S * d).sum() / var_p)
    T = mg - s * R @ mp
    return Sim3(s, R, T)


def alignment_for(field: TrajectoryField, gt: GroundTruthBundle) -> Sim3:
    """Fit a similarity on static self-point-map pixels."""
    pred = self_point_maps(field)
    mask = gt.self_valid() & field.valid
    if gt.static_mask is not None:
        mask &= gt.static_mask
    return sim3_align(pred, gt.self_points(), mask)


def _pair_mask(N: int, pairs) -> np.ndarray:
    if pairs is None:
        return np.ones((N, N), bool)
    m = np.asarray(pairs, bool)
    if m.shape != (N, N):
        raise ShapeError(f"pair mask must be ({N}, {N})")
    return m


def _check_shapes(field: TrajectoryField, gt: GroundTruthBundle):
    if (field.num_frames, field.height, field.width) != (gt.num_frames, gt.height, gt.width):
        raise ShapeError("field and ground truth disagree in N, H or W")


def _predictions(field, gt, align):
    X = cross_frame_points(field)
    sim = None
    if align:
        sim = align if isinstance(align, Sim3) else alignment_for(field, gt)
        X = sim.apply(X)
    return X, sim


def endpoint_errors(field: TrajectoryField, gt: GroundTruthBundle, align=False, pairs=None):
    """Per-term errors ``|X - X_gt|`` (N, N, H, W), the evaluation mask, and the alignment used."""
    _check_shapes(field, gt)
    X, sim = _predictions(field, gt, align)
    err = np.linalg.norm(X - gt.points, axis=-1)
    mask = gt.valid & field.valid[:, None] & _pair_mask(gt.num_frames, pairs)[:, :, None, None]
    return err, mask, sim


def epe(field: TrajectoryField, gt: GroundTruthBundle, align=False, pairs=None):
    """``(epe_mix, epe_sta, epe_dyn)``; a class with no terms yields ``nan``.

    Raises :class:`MetricError` if there are no valid terms at all.
    """
    err, mask, _ = endpoint_errors(field, gt, align, pairs)
    if not mask.any():
        raise MetricError("no valid EPE terms")
    out = [float(err[mask].mean())]
    if gt.static_mask is None:
        return out[0], float("nan"), float("nan")
    sta = gt.static_mask[:, None]
    for m in (mask & sta, mask & ~sta):
        out.append(float(err[m].mean()) if m.any() else float("nan"))
    return tuple(out)


def sdd(field: TrajectoryField, static_mask) -> float:
    """Mean over static pixels of the RMS spread of ``x(t_j)`` about its temporal mean."""
    mask = np.asarray(static_mask, bool) & field.valid
    if not mask.any():
        raise MetricError("static mask is empty")
    X = cross_frame_points(field)  # (N, N, H, W, 3), second axis is time
    dev = X - X.mean(axis=1, keepdims=True)
    rms = np.sqrt(np.einsum("ijhwc,ijhwc->ihw", dev, dev) / field.num_frames)
    return float(rms[mask].mean())


def ca(field: TrajectoryField, correspondences, static_mask=None, dynamic_only: bool = True) -> float:
    """Mean distance between corresponding pixels' trajectories over the frame timestamps.

    With ``dynamic_only`` a pair counts if either pixel is dynamic.
    """
    corr = np.asarray(correspondences, dtype=np.int64).reshape(-1, 6)
    if dynamic_only and static_mask is not None and len(corr):
        sm = np.asarray(static_mask, bool)
        dyn = ~sm[corr[:, 0], corr[:, 2], corr[:, 1]] | ~sm[corr[:, 3], corr[:, 5], corr[:, 4]]
        corr = corr[dyn]
    if len(corr) == 0:
        raise MetricError("no correspondences to evaluate")
    Phi = basis_matrix(field.spec, field.timestamps)
    P = field.control_points
    Pa = P[corr[:, 0], :, corr[:, 2], corr[:, 1]]  # (K, D, 3)
    Pb = P[corr[:, 3], :, corr[:, 5], corr[:, 4]]
    diff = np.einsum("md,kdc->kmc", Phi, Pa - Pb)
    return float(np.linalg.norm(diff, axis=-1).mean())


def predicted_visibility(field: TrajectoryField, cameras: list[Camera], X=None, tau: float = 0.0) -> np.ndarray:
    """Depth-test each predicted ``X[i, j]`` against frame ``j``'s predicted point map.

    A point is predicted visible when it projects inside image ``j`` and is no
    further than ``tau`` behind the surface seen at the nearest pixel.
    """
    N, H, W = field.num_frames, field.height, field.width
    X = cross_frame_points(field) if X is None else X
    self_maps = self_point_maps(field)
    vis = np.zeros((N, N, H, W), bool)
    for j, cam in enumerate(cameras):
        _, surf_depth = cam.project(self_maps[j])
        uv, z = cam.project(X[:, j])
        u = np.rint(np.nan_to_num(uv[..., 0], nan=-1.0, posinf=-1.0, neginf=-1.0))
        v = np.rint(np.nan_to_num(uv[..., 1], nan=-1.0, posinf=-1.0, neginf=-1.0))
        inside = (z > 0) & (u >= 0) & (u < W) & (v >= 0) & (v < H)
        ui = np.clip(u, 0, W - 1).astype(int)
        vi = np.clip(v, 0, H - 1).astype(int)
        seen = field.valid[j][vi, ui] & (z <= surf_depth[vi, ui] + tau)
        vis[:, j] = inside & seen
    return vis


def apd_aj(field: TrajectoryField, gt: GroundTruthBundle, thresholds=None, align=False, pairs=None):
    """Fraction of GT-visible points within each threshold, and average Jaccard.

    ``thresholds`` default to ``APD_FRACTIONS * scene_scale``. Returns
    ``(list of (threshold, fraction), apd_mean, aj, aj_per_threshold)``.
    """
    if gt.visible is None or not gt.has_cameras:
        raise MetricError("APD/AJ need ground-truth visibility and cameras")
    scale = gt.scene_scale
    thr = np.asarray(thresholds if thresholds is not None else np.array(APD_FRACTIONS) * scale, float)
    if np.any(thr <= 0) or np.any(np.diff(thr) <= 0):
        raise MetricError("thresholds must be positive and ascending")
    err, mask, _ = endpoint_errors(field, gt, align, pairs)
    gt_vis = gt.visible & mask
    if not gt_vis.any():
        raise MetricError("no visible ground-truth points")
    X = cross_frame_points(field)
    pred_vis = predicted_visibility(field, gt.cameras, X, VISIBILITY_FRACTION * scale) & mask
    apd, ajs = [], []
    for d in thr:
        close = err < d
        tp = np.count_nonzero(gt_vis & pred_vis & close)
        fp = np.count_nonzero(pred_vis & ~(gt_vis & close))
        fn = np.count_nonzero(gt_vis & ~(pred_vis & close))
        apd.append((float(d), np.count_nonzero(gt_vis & close) / np.count_nonzero(gt_vis)))
        ajs.append(tp / (tp + fp + fn) if tp + fp + fn else 0.0)
    return apd, float(np.mean([a for _, a in apd])), float(np.mean(ajs)), ajs
