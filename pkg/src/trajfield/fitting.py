"""Least-squares fitting of control points to sampled trajectories.

The fit is centered on the weighted sample centroid and ridge-regularized
toward it, so a pixel whose samples all coincide gets identical control
points (a degenerate trajectory) rather than points shrunk toward the origin.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.linalg import solve_triangular

from .bundle import GroundTruthBundle
from .curves import CurveSpec, basis_matrix
from .errors import InputError, RankDeficiencyError, ShapeError
from .field import TrajectoryField

log = logging.getLogger(__name__)

DEFAULT_RIDGE = 1e-8


def _solve(Phi: np.ndarray, w: np.ndarray, Y: np.ndarray, ridge: float):
    """Fit a batch of pixels sharing sample times.

    ``Phi`` (M, D), ``w`` (M,), ``Y`` (K, M, 3). Returns control points
    (K, D, 3) and per-pixel weighted squared residual sums (K,).
    """
    D = Phi.shape[1]
    wsum = w.sum()
    centroid = np.einsum("m,kmc->kc", w, Y) / wsum
    # Solve for the offset from the all-centroid control polygon. Its curve is
    # ``row_sum * centroid``, which is the centroid itself for partition-of-unity bases.
    row_sum = Phi.sum(axis=1)
    if np.allclose(row_sum, 1.0, rtol=0, atol=1e-12):
        row_sum = np.ones_like(row_sum)
    Yc = Y - row_sum[None, :, None] * centroid[:, None, :]
    # QR of the weighted design stacked on the ridge rows; unlike the normal
    # equations this does not square the conditioning of ill-posed bases.
    sw = np.sqrt(w)
    A = np.vstack([sw[:, None] * Phi, np.sqrt(ridge) * np.eye(D)])
    if ridge == 0.0:
        rank = np.linalg.matrix_rank(A)
        if rank < D:
            raise RankDeficiencyError(
                f"design matrix is rank deficient ({rank} < {D}); "
                "use ridge > 0 or supply more distinct sample times"
            )
    Q, R = np.linalg.qr(A)
    b = np.concatenate([sw[None, :, None] * Yc, np.zeros((Yc.shape[0], D, 3))], axis=1)
    rhs = np.einsum("md,kmc->dkc", Q, b).reshape(D, -1)
    delta = solve_triangular(R, rhs).reshape(D, -1, 3).transpose(1, 0, 2)
    P = centroid[:, None, :] + delta
    resid = np.einsum("md,kdc->kmc", Phi, delta) - Yc
    sq = np.einsum("m,kmc->k", w, resid**2)
    return P, sq


def fit_pixel(ts, positions, spec: CurveSpec, weights=None, ridge: float = DEFAULT_RIDGE):
    """Fit one trajectory's control points to weighted samples.

    Minimizes ``sum_j w_j |x(t_j) - Y_j|^2 + ridge * sum_k |P_k - centroid|^2``
    via a QR least-squares solve. Returns ``(control_points (D, 3), residual_rms)``
    where the RMS is weight-normalized.
    """
    ts = np.asarray(ts, float).reshape(-1)
    Y = np.asarray(positions, float)
    if Y.shape != (ts.size, 3):
        raise ShapeError(f"positions must be ({ts.size}, 3), got {Y.shape}")
    if ts.size == 0:
        raise InputError("need at least one sample")
    w = np.ones(ts.size) if weights is None else np.asarray(weights, float).reshape(-1)
    if w.shape != ts.shape or np.any(w <= 0):
        raise InputError("weights must be positive, one per sample")
    if ridge < 0:
        raise InputError("ridge must be non-negative")
    P, sq = _solve(basis_matrix(spec, ts), w, Y[None], float(ridge))
    return P[0], float(np.sqrt(sq[0] / w.sum()))


def _fit_frame(i: int, gt: GroundTruthBundle, Phi: np.ndarray, ridge: float):
    N, H, W = gt.num_frames, gt.height, gt.width
    D = Phi.shape[1]
    valid = gt.valid[i].reshape(N, H * W).T  # (HW, N)
    Y = gt.points[i].reshape(N, H * W, 3).transpose(1, 0, 2)  # (HW, N, 3)
    P = np.zeros((H * W, D, 3))
    ok = np.zeros(H * W, bool)
    sq_total, n_total = 0.0, 0
    patterns, inverse = np.unique(valid, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    for g, pat in enumerate(patterns):
        if not pat.any():
            continue
        pix = np.flatnonzero(inverse == g)
        Pg, sq = _solve(Phi[pat], np.ones(int(pat.sum())), Y[pix][:, pat], ridge)
        P[pix] = Pg
        ok[pix] = True
        sq_total += float(sq.sum())
        n_total += int(pat.sum()) * len(pix)
    P = P.reshape(H, W, D, 3).transpose(2, 0, 1, 3)
    return P, ok.reshape(H, W), sq_total, n_total


def fit_field(gt: GroundTruthBundle, spec: CurveSpec, ridge: float = DEFAULT_RIDGE, threads: int = 1) -> TrajectoryField:
    """Fit every pixel of every frame to its ground-truth trajectory samples.

    Pixels sharing a validity pattern share one Gram factorization. Pixels with
    no valid sample are marked invalid. The weighted residual RMS over all
    fitted samples is stored in ``field.info["fit_residual_rms"]``.
    """
    if gt.num_frames == 0 or not gt.valid.any():
        raise InputError("ground-truth bundle has no valid samples")
    Phi = basis_matrix(spec, gt.timestamps)
    frames = range(gt.num_frames)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(lambda i: _fit_frame(i, gt, Phi, ridge), frames))
    else:
        results = [_fit_frame(i, gt, Phi, ridge) for i in frames]
    P = np.stack([r[0] for r in results])
    valid = np.stack([r[1] for r in results])
    sq = sum(r[2] for r in results)
    n = sum(r[3] for r in results)
    rms = float(np.sqrt(sq / n)) if n else 0.0
    log.info("fitted %d frames, residual rms %.3g", gt.num_frames, rms)
    return TrajectoryField(
        spec=spec,
        control_points=P,
        confidences=np.ones(P.shape[:-1]),
        timestamps=gt.timestamps,
        valid=valid,
        info={"fit_residual_rms": rms, "ridge": float(ridge)},
    )
