"""Dense ground-truth bundles from analytic scenes."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..bundle import GroundTruthBundle
from ..errors import ConfigError
from ..field import default_timestamps, scene_scale_of
from .scene import Scene, ray_cast

log = logging.getLogger(__name__)

VISIBILITY_TOL = 1e-4  # times scene scale
MATERIAL_TOL = 1e-9  # times scene scale
MAX_CORRESPONDENCES = 10_000


def _map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def generate_bundle(scene: Scene, num_frames: int, height: int, width: int, threads: int = 1,
                    max_correspondences: int = MAX_CORRESPONDENCES) -> GroundTruthBundle:
    """Ray-cast every pixel of every frame and track its material point through time.

    ``X[i, i]`` is the ray-cast hit itself; ``X[i, j]`` pushes the hit's
    material point to time ``t_j``. Visibility re-casts the ray through the
    projection of ``X[i, j]`` in camera ``j`` and compares depths within
    ``1e-4 * scene_scale``. Correspondences are pixel pairs whose hits share a
    primitive and a material point (within ``1e-9 * scene_scale``), found by
    projection and subsampled with the scene seed.
    """
    N, H, W = int(num_frames), int(height), int(width)
    if N < 2:
        raise ConfigError("need at least 2 frames")
    if H < 1 or W < 1:
        raise ConfigError("image size must be positive")
    ts = default_timestamps(N)
    cams = [scene.camera(t, H, W) for t in ts]
    vv, uu = np.mgrid[0:H, 0:W]
    u_flat, v_flat = uu.ravel().astype(float), vv.ravel().astype(float)

    hits = _map(lambda i: ray_cast(scene, ts[i], cams[i], u_flat, v_flat), range(N), threads)
    prim = np.stack([h.primitive for h in hits]).reshape(N, H, W)
    material = np.stack([h.material for h in hits]).reshape(N, H, W, 3)
    self_pts = np.stack([h.point for h in hits]).reshape(N, H, W, 3)
    depth = np.stack([np.where(np.isfinite(h.depth), h.depth, 0.0) for h in hits]).reshape(N, H, W)
    hit_ok = prim >= 0
    scale = scene_scale_of(self_pts, hit_ok)

    def frame_trajectories(i):
        X = np.zeros((N, H * W, 3))
        ids = prim[i].ravel()
        mat = material[i].reshape(-1, 3)
        for j in range(N):
            if j == i:
                X[j] = self_pts[i].reshape(-1, 3)
                continue
            for k, p in enumerate(scene.primitives):
                sel = ids == k
                if not sel.any():
                    continue
                X[j, sel] = self_pts[i].reshape(-1, 3)[sel] if p.is_static else p.to_world(mat[sel], ts[j])
        return X.reshape(N, H, W, 3)

    points = np.stack(_map(frame_trajectories, range(N), threads))
    valid = np.broadcast_to(hit_ok[:, None], (N, N, H, W)).copy()

    def frame_visibility(i):
        vis = np.zeros((N, H * W), bool)
        match = []
        ok = hit_ok[i].ravel()
        for j in range(N):
            if j == i:
                vis[j] = ok
                continue
            X = points[i, j].reshape(-1, 3)
            uv, z = cams[j].project(X)
            inside = ok & (z > 0) & np.all(np.isfinite(uv), axis=1)
            inside &= (uv[:, 0] >= -0.5) & (uv[:, 0] <= W - 0.5) & (uv[:, 1] >= -0.5) & (uv[:, 1] <= H - 0.5)
            idx = np.flatnonzero(inside)
            if idx.size == 0:
                continue
            hit = ray_cast(scene, ts[j], cams[j], uv[idx, 0], uv[idx, 1])
            seen = np.abs(hit.depth - z[idx]) <= VISIBILITY_TOL * scale
            vis[j, idx[seen]] = True
            if j > i:
                src = idx[seen]
                uu_j = np.clip(np.rint(uv[src, 0]).astype(int), 0, W - 1)
                vv_j = np.clip(np.rint(uv[src, 1]).astype(int), 0, H - 1)
                same = prim[j, vv_j, uu_j] == prim[i].ravel()[src]
                dist = np.linalg.norm(material[j, vv_j, uu_j] - material[i].reshape(-1, 3)[src], axis=1)
                keep = same & (dist <= MATERIAL_TOL * scale)
                s = src[keep]
                if s.size:
                    match.append(np.stack([np.full(s.size, i), s % W, s // W,
                                           np.full(s.size, j), uu_j[keep], vv_j[keep]], axis=1))
        return vis.reshape(N, H, W), match

    vis_results = _map(frame_visibility, range(N), threads)
    visible = np.stack([r[0] for r in vis_results])
    pairs = [m for r in vis_results for m in r[1]]
    corr = np.concatenate(pairs) if pairs else np.zeros((0, 6), np.int64)
    if len(corr) > max_correspondences:
        rng = np.random.default_rng([scene.seed, 7919])
        corr = corr[np.sort(rng.choice(len(corr), max_correspondences, replace=False))]

    static_flags = np.array([p.is_static for p in scene.primitives] + [False])
    segment = np.array([p.segment_id if p.is_rigid else -1 for p in scene.primitives] + [-1])
    static_mask = static_flags[prim] & hit_ok
    rigid_labels = np.where(hit_ok, segment[prim], -1)

    log.info("generated %s bundle: N=%d %dx%d, scale %.3f, %d correspondences",
             scene.preset, N, W, H, scale, len(corr))
    return GroundTruthBundle(
        timestamps=ts,
        points=points,
        valid=valid,
        visible=visible,
        static_mask=static_mask,
        rigid_labels=rigid_labels,
        correspondences=corr,
        focal=np.array([c.focal for c in cams]),
        principal=np.array([[c.cx, c.cy] for c in cams]),
        quat=np.stack([c.quat for c in cams]),
        translation=np.stack([c.translation for c in cams]),
        depth=depth,
        primitive_ids=prim,
        scene_scale=scale,
    )
