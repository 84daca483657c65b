"""Training objective for trajectory fields with analytic gradients.

Every loss returns ``(value, FieldGrad)`` where the gradient arrays have the
field's layout: control points ``(N, D, H, W, 3)`` and confidences
``(N, D, H, W)``. Internally the losses operate on raw arrays so the
optimizer can evaluate them without rebuilding field objects.

The confidence-weighted trajectory term is ``S * l - alpha * log S`` with
``S`` the basis-blended confidence. Its minimum over ``S`` sits at
``S = alpha / l``: confident where the error is small, discounted where it
is large.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .bundle import GroundTruthBundle
from .curves import basis_matrix
from .errors import ConfigError, InputError, NumericDomainError, ShapeError
from .field import TrajectoryField

log = logging.getLogger(__name__)


class FieldGrad(NamedTuple):
    points: np.ndarray
    confidences: np.ndarray


def _zero_grad(P, C) -> FieldGrad:
    return FieldGrad(np.zeros_like(P), np.zeros_like(C))


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.2
    lambda_time: float = 0.0
    lambda_static: float = 0.1
    lambda_rigid: float = 0.1
    lambda_corr: float = 0.1
    rigid_pair_samples: int = 512

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        for name in ("lambda_time", "lambda_static", "lambda_rigid", "lambda_corr"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.rigid_pair_samples < 1:
            raise ConfigError("rigid_pair_samples must be >= 1")

    @classmethod
    def from_json(cls, path) -> "LossWeights":
        data = json.loads(Path(path).read_text())
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown loss-weight keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossBreakdown:
    traj_conf: float
    time: float
    static: float
    rigid: float
    corr: float
    total: float
    counts: dict = dc_field(default_factory=dict)


def traj_loss(pred, gt) -> float:
    """Squared Euclidean distance between a predicted and a true position."""
    d = np.asarray(pred, float) - np.asarray(gt, float)
    return float(d @ d)


# ---------------------------------------------------------------------------
# array-level terms


def _conf_traj(P, C, Phi, Y, valid, alpha):
    count = int(valid.sum())
    if count == 0:
        raise InputError("no valid ground-truth samples")
    X = np.einsum("jd,idhwc->ijhwc", Phi, P)
    S = np.einsum("jd,idhw->ijhw", Phi, C)
    if np.any(S[valid] <= 0):
        raise NumericDomainError("aggregated confidence must be positive")
    r = X - Y
    ell = np.einsum("...c,...c->...", r, r)
    S_safe = np.where(valid, S, 1.0)
    terms = np.where(valid, S_safe * ell - alpha * np.log(S_safe), 0.0)
    value = float(terms.sum()) / count
    gX = np.where(valid[..., None], 2.0 * S_safe[..., None] * r, 0.0) / count
    gS = np.where(valid, ell - alpha / S_safe, 0.0) / count
    gP = np.einsum("jd,ijhwc->idhwc", Phi, gX)
    gC = np.einsum("jd,ijhw->idhw", Phi, gS)
    return value, FieldGrad(gP, gC), count


def _static(P, mask):
    count = int(mask.sum())
    if count == 0:
        return 0.0, np.zeros_like(P), 0
    D = P.shape[1]
    dev = P - P.mean(axis=1, keepdims=True)
    var = np.einsum("ndhwc,ndhwc->nhw", dev, dev) / D
    value = float(var[mask].sum()) / count
    g = (2.0 / (D * count)) * dev * mask[:, None, :, :, None]
    return value, g, count


def _pixel_major(P):
    """(N, D, H, W, 3) -> (N*H*W, D, 3)."""
    N, D, H, W, _ = P.shape
    return np.moveaxis(P, 1, 3).reshape(N * H * W, D, 3)


def _field_major(G, shape):
    N, D, H, W, _ = shape
    return np.moveaxis(G.reshape(N, H, W, D, 3), 3, 1)


def _rigid(P, pairs):
    if len(pairs) == 0:
        return 0.0, np.zeros_like(P), 0
    flat = _pixel_major(P)
    a, b = pairs[:, 0], pairs[:, 1]
    diff = flat[a] - flat[b]  # (K, D, 3)
    dist = np.linalg.norm(diff, axis=-1)  # (K, D)
    K, D = dist.shape
    dev = dist - dist.mean(axis=1, keepdims=True)
    value = float((dev**2).mean(axis=1).sum()) / K
    gd = (2.0 / (D * K)) * dev
    with np.errstate(divide="ignore", invalid="ignore"):
        unit = np.where(dist[..., None] > 0, diff / dist[..., None], 0.0)
    gdiff = gd[..., None] * unit
    G = np.zeros_like(flat)
    np.add.at(G, a, gdiff)
    np.add.at(G, b, -gdiff)
    return value, _field_major(G, P.shape), K


def _flat_index(shape, i, u, v):
    N, _, H, W, _ = shape
    return (np.asarray(i) * H + np.asarray(v)) * W + np.asarray(u)


def _corr(P, corr):
    if corr is None or len(corr) == 0:
        return 0.0, np.zeros_like(P), 0
    corr = np.asarray(corr, dtype=np.int64).reshape(-1, 6)
    flat = _pixel_major(P)
    a = _flat_index(P.shape, corr[:, 0], corr[:, 1], corr[:, 2])
    b = _flat_index(P.shape, corr[:, 3], corr[:, 4], corr[:, 5])
    diff = flat[a] - flat[b]
    K, D = diff.shape[:2]
    value = float(np.einsum("kdc,kdc->k", diff, diff).sum()) / (D * K)
    gdiff = (2.0 / (D * K)) * diff
    G = np.zeros_like(flat)
    np.add.at(G, a, gdiff)
    np.add.at(G, b, -gdiff)
    return value, _field_major(G, P.shape), K


# ---------------------------------------------------------------------------
# rigid pair sampling


def _decode_pairs(lin: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Map row-major upper-triangle indices to ``(a, b)`` with ``a < b``."""
    lin = np.asarray(lin, dtype=np.int64)
    # row a starts at offset a*n - a*(a+1)/2 - ... ; solve the quadratic then fix rounding
    a = (n - 2 - np.floor(np.sqrt(-8.0 * lin + 4.0 * n * (n - 1) - 7) / 2.0 - 0.5)).astype(np.int64)
    start = a * (2 * n - a - 1) // 2
    over = lin < start
    a[over] -= 1
    start = a * (2 * n - a - 1) // 2
    under = lin >= start + (n - 1 - a)
    a[under] += 1
    start = a * (2 * n - a - 1) // 2
    b = lin - start + a + 1
    return a, b


def sample_rigid_pairs(rigid_labels: np.ndarray, pair_samples: int, seed: int = 0) -> np.ndarray:
    """Draw up to ``pair_samples`` distinct same-segment pixel pairs per segment.

    Returns (K, 2) flat pixel indices into the ``(N, H, W)`` grid. Labels
    below zero mean "no segment". Segments with fewer than two pixels are
    skipped.
    """
    labels = np.asarray(rigid_labels).reshape(-1)
    rng = np.random.default_rng(seed)
    out = []
    for seg in np.unique(labels[labels >= 0]):
        idx = np.flatnonzero(labels == seg)
        n = idx.size
        if n < 2:
            continue
        total = n * (n - 1) // 2
        k = min(int(pair_samples), total)
        lin = np.sort(rng.choice(total, size=k, replace=False))
        a, b = _decode_pairs(lin, n)
        out.append(np.stack([idx[a], idx[b]], axis=1))
    if not out:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(out)


# ---------------------------------------------------------------------------
# public field-level losses


def conf_traj_loss(field: TrajectoryField, gt: GroundTruthBundle, alpha: float = 0.2):
    """Confidence-weighted all-to-all trajectory loss over valid (i, j, u, v)."""
    Phi = basis_matrix(field.spec, field.timestamps)
    value, grad, _ = _conf_traj(field.control_points, field.confidences, Phi, gt.points, gt.valid, alpha)
    return value, grad


def time_loss(pred_timestamps, gt_timestamps) -> float:
    """Mean absolute timestamp error."""
    a = np.asarray(pred_timestamps, float)
    b = np.asarray(gt_timestamps, float)
    if a.shape != b.shape:
        raise ShapeError(f"timestamp lists differ in length: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).mean())


def static_reg(field: TrajectoryField, static_mask):
    """Mean control-point variance over static pixels."""
    P = field.control_points
    mask = np.asarray(static_mask, bool)
    if mask.shape != (field.num_frames, field.height, field.width):
        raise ShapeError("static mask must be (N, H, W)")
    value, g, count = _static(P, mask)
    if count == 0:
        log.info("static_reg: empty mask")
    return value, FieldGrad(g, np.zeros_like(field.confidences))


def rigid_reg(field: TrajectoryField, rigid_labels, pair_samples: int = 512, seed: int = 0):
    """Mean variance of pairwise control-point distances within rigid segments."""
    labels = np.asarray(rigid_labels)
    if labels.shape != (field.num_frames, field.height, field.width):
        raise ShapeError("rigid labels must be (N, H, W)")
    pairs = sample_rigid_pairs(labels, pair_samples, seed)
    value, g, _ = _rigid(field.control_points, pairs)
    return value, FieldGrad(g, np.zeros_like(field.confidences))


def corr_reg(field: TrajectoryField, correspondences):
    """Mean squared control-point discrepancy between corresponding pixels."""
    value, g, _ = _corr(field.control_points, correspondences)
    return value, FieldGrad(g, np.zeros_like(field.confidences))


class Objective:
    """The full weighted objective bound to one ground-truth bundle.

    Rigid pairs are sampled once at construction so repeated evaluations see
    the same objective.
    """

    def __init__(self, gt: GroundTruthBundle, spec, timestamps, weights: LossWeights, seed: int = 0):
        self.gt = gt
        self.weights = weights
        self.timestamps = np.asarray(timestamps, float)
        self.Phi = basis_matrix(spec, self.timestamps)
        N, H, W = gt.num_frames, gt.height, gt.width
        self.static_mask = gt.static_mask if gt.static_mask is not None else np.zeros((N, H, W), bool)
        labels = gt.rigid_labels if gt.rigid_labels is not None else -np.ones((N, H, W), int)
        self.pairs = sample_rigid_pairs(labels, weights.rigid_pair_samples, seed) if weights.lambda_rigid > 0 else np.zeros((0, 2), int)
        self.corr = gt.correspondences if gt.correspondences is not None else np.zeros((0, 6), int)

    def __call__(self, P, C) -> tuple[LossBreakdown, FieldGrad]:
        w = self.weights
        tc, g, n_traj = _conf_traj(P, C, self.Phi, self.gt.points, self.gt.valid, w.alpha)
        gP, gC = g.points, g.confidences
        t = time_loss(self.timestamps, self.gt.timestamps)
        st = ri = co = 0.0
        n_st, n_ri, n_co = int(self.static_mask.sum()), len(self.pairs), len(self.corr)
        if w.lambda_static > 0:
            st, gs, n_st = _static(P, self.static_mask)
            gP = gP + w.lambda_static * gs
        if w.lambda_rigid > 0:
            ri, gr, n_ri = _rigid(P, self.pairs)
            gP = gP + w.lambda_rigid * gr
        if w.lambda_corr > 0:
            co, gco, n_co = _corr(P, self.corr)
            gP = gP + w.lambda_corr * gco
        total = tc + w.lambda_time * t + w.lambda_static * st + w.lambda_rigid * ri + w.lambda_corr * co
        counts = {"traj_conf": n_traj, "static": n_st, "rigid": n_ri, "corr": n_co, "time": len(self.timestamps)}
        return LossBreakdown(tc, t, st, ri, co, total, counts), FieldGrad(gP, gC)


def total_loss(field: TrajectoryField, gt: GroundTruthBundle, weights: LossWeights | None = None, seed: int = 0):
    """Weighted sum of all terms; returns ``(LossBreakdown, FieldGrad)``."""
    weights = weights or LossWeights()
    obj = Objective(gt, field.spec, field.timestamps, weights, seed)
    return obj(field.control_points, field.confidences)


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckReport:
    max_rel_error: float
    trials: int
    worst: dict
    max_abs_analytic: float
    max_abs_numeric: float

    def to_dict(self) -> dict:
        return asdict(self)


def check_gradient(fn, P, C, eps: float = 1e-4, trials: int = 64, seed: int = 0, params: str = "all") -> GradCheckReport:
    """Compare ``fn(P, C) -> (value, FieldGrad)`` against central differences.

    Coordinates are drawn uniformly (seeded) from the control points, the
    confidences, or both. The relative error is
    ``|g_a - g_fd| / max(1, |g_a|, |g_fd|)``.
    """
    if eps <= 0:
        raise ConfigError("eps must be positive")
    P = np.array(P, float)
    C = np.array(C, float)
    _, grad = fn(P, C)
    rng = np.random.default_rng(seed)
    targets = {"all": ("points", "confidences"), "points": ("points",), "confidences": ("confidences",)}[params]
    worst = {"rel_error": -1.0}
    max_a = max_n = 0.0
    for _ in range(trials):
        which = targets[rng.integers(len(targets))]
        arr = P if which == "points" else C
        flat = int(rng.integers(arr.size))
        idx = np.unravel_index(flat, arr.shape)
        orig = arr[idx]
        arr[idx] = orig + eps
        f_plus = fn(P, C)[0]
        arr[idx] = orig - eps
        f_minus = fn(P, C)[0]
        arr[idx] = orig
        f_plus = f_plus.total if isinstance(f_plus, LossBreakdown) else f_plus
        f_minus = f_minus.total if isinstance(f_minus, LossBreakdown) else f_minus
        g_fd = (f_plus - f_minus) / (2 * eps)
        g_a = float(getattr(grad, which)[idx])
        rel = abs(g_a - g_fd) / max(1.0, abs(g_a), abs(g_fd))
        max_a, max_n = max(max_a, abs(g_a)), max(max_n, abs(g_fd))
        if rel > worst["rel_error"]:
            worst = {"rel_error": rel, "param": which, "index": [int(k) for k in idx],
                     "analytic": g_a, "numeric": g_fd}
    return GradCheckReport(float(worst["rel_error"]), trials, worst, max_a, max_n)


def grad_check(field: TrajectoryField, gt: GroundTruthBundle, weights: LossWeights | None = None,
               eps: float = 1e-4, trials: int = 64, seed: int = 0, params: str = "all") -> GradCheckReport:
    """Finite-difference check of :func:`total_loss` gradients."""
    obj = Objective(gt, field.spec, field.timestamps, weights or LossWeights(), seed)
    return check_gradient(obj, field.control_points, field.confidences, eps, trials, seed, params)


def random_problem(num_frames: int = 3, height: int = 8, width: int = 8, num_control_points: int = 4,
                   family: str = "bspline", seed: int = 0):
    """A random field and a random bundle that exercise every loss term.

    Used by the gradient check; not a physically meaningful scene.
    """
    from .curves import curve_spec

    rng = np.random.default_rng(seed)
    N, H, W = num_frames, height, width
    spec = curve_spec(family, num_control_points)
    D = spec.num_control_points
    P = rng.normal(size=(N, D, H, W, 3))
    C = rng.uniform(0.5, 1.5, size=(N, D, H, W))
    ts = np.arange(N) / (N - 1)
    gt_points = rng.normal(size=(N, N, H, W, 3))
    valid = rng.random((N, N, H, W)) < 0.8
    static = rng.random((N, H, W)) < 0.4
    labels = rng.integers(-1, 3, size=(N, H, W))
    K = 4 * N * H
    corr = np.stack([rng.integers(N, size=K), rng.integers(W, size=K), rng.integers(H, size=K),
                     rng.integers(N, size=K), rng.integers(W, size=K), rng.integers(H, size=K)], axis=1)
    field = TrajectoryField(spec, P, C, ts)
    gt = GroundTruthBundle(ts, gt_points, valid, static_mask=static, rigid_labels=labels, correspondences=corr)
    return field, gt
