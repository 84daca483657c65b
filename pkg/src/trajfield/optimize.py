"""Direct per-scene optimization of a trajectory field.

Plain gradient descent on control points and log-confidences with a
backtracking step: a trial step is halved until the loss decreases, and the
accepted step is then enlarged for the next iteration. The accepted-loss
history is therefore non-increasing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .bundle import GroundTruthBundle
from .curves import CurveSpec
from .errors import ConfigError, OptimizationError
from .field import TrajectoryField
from .losses import LossWeights, Objective

log = logging.getLogger(__name__)

INITS = ("centroid", "gt_first_frame", "random")


@dataclass(frozen=True)
class OptimizeConfig:
    iters: int = 500
    step: float = 1.0  # per-pixel step; gradients are rescaled by N*H*W
    init: str = "centroid"
    seed: int = 0
    grow: float = 2.0
    max_halvings: int = 40

    def __post_init__(self):
        if self.iters < 1:
            raise ConfigError("iters must be >= 1")
        if self.init not in INITS:
            raise ConfigError(f"unknown init {self.init!r}; expected one of {INITS}")
        if not self.step > 0 or not self.grow >= 1.0:
            raise ConfigError("step must be > 0 and grow >= 1")


def initial_control_points(gt: GroundTruthBundle, D: int, init: str, seed: int = 0) -> np.ndarray:
    """Starting control points, shape (N, D, H, W, 3).

    ``centroid``: every control point at the mean of the pixel's valid GT
    samples. ``gt_first_frame``: at the pixel's GT position in frame 0.
    ``random``: centroid plus Gaussian noise of 5% of the scene scale.
    """
    w = gt.valid[..., None].astype(float)
    cnt = w.sum(axis=1)
    centroid = np.where(cnt > 0, (gt.points * w).sum(axis=1) / np.maximum(cnt, 1), 0.0)  # (N, H, W, 3)
    if init == "gt_first_frame":
        base = np.where(gt.valid[:, 0, ..., None], gt.points[:, 0], centroid)
    else:
        base = centroid
    P = np.repeat(base[:, None], D, axis=1)
    if init == "random":
        rng = np.random.default_rng(seed)
        P = P + rng.normal(scale=0.05 * (gt.scene_scale or 1.0), size=P.shape)
    return P


def optimize_field(gt: GroundTruthBundle, spec: CurveSpec, weights: LossWeights | None = None,
                   config: OptimizeConfig | None = None) -> tuple[TrajectoryField, list[float]]:
    """Fit a field to ``gt`` by minimizing the full objective.

    Returns the best field and the accepted-loss history (initial loss first).
    Raises :class:`OptimizationError` if the loss or its gradient is not finite.
    """
    weights = weights or LossWeights()
    config = config or OptimizeConfig()
    N, H, W = gt.num_frames, gt.height, gt.width
    obj = Objective(gt, spec, gt.timestamps, weights, config.seed)
    P = initial_control_points(gt, spec.num_control_points, config.init, config.seed)
    s = np.zeros(P.shape[:-1])  # log-confidences
    scale = float(N * H * W)

    def evaluate(P, s):
        with np.errstate(over="raise"):
            C = np.exp(s)
        br, g = obj(P, C)
        return br, g.points, g.confidences * C

    br, gP, gs = evaluate(P, s)
    if not np.isfinite(br.total):
        raise OptimizationError("initial loss is not finite", iteration=0)
    history = [br.total]
    step = config.step
    for it in range(1, config.iters + 1):
        if not (np.all(np.isfinite(gP)) and np.all(np.isfinite(gs))):
            raise OptimizationError(f"non-finite gradient at iteration {it}", iteration=it)
        accepted = False
        for _ in range(config.max_halvings):
            P_new = P - step * scale * gP
            s_new = s - step * scale * gs
            try:
                br_new, gP_new, gs_new = evaluate(P_new, s_new)
            except FloatingPointError:
                br_new = None
            if br_new is not None and np.isfinite(br_new.total) and br_new.total < history[-1]:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if br_new is not None and np.isnan(br_new.total) and step * scale * np.abs(gP).max() > 1e-300:
                raise OptimizationError(f"loss diverged (NaN) at iteration {it}", iteration=it)
            log.info("optimizer stalled at iteration %d (loss %.6g)", it, history[-1])
            break
        P, s, br, gP, gs = P_new, s_new, br_new, gP_new, gs_new
        history.append(br.total)
        step *= config.grow
        if it % 50 == 0:
            log.debug("iter %d loss %.6g step %.3g", it, br.total, step)
    field = TrajectoryField(
        spec=spec, control_points=P, confidences=np.exp(s), timestamps=gt.timestamps,
        valid=gt.valid.any(axis=1),
        info={"optimizer": {"iters": len(history) - 1, "final_loss": history[-1], "init": config.init}},
    )
    return field, history
