"""Benchmark harness: run every metric over one or more sequences and report.

Reports are plain dicts serialized as JSON with sorted keys; absent metrics
are listed under ``"absent"`` with the reason. Wall-clock timings are only
included on request so that reports stay byte-identical across reruns.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import metrics
from .bundle import GroundTruthBundle
from .errors import AlignmentError, ConfigError, MetricError
from .field import TrajectoryField

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
PROTOCOLS = ("video", "pair")


def protocol_pairs(num_frames: int, protocol: str = "video", gap: int = 5) -> np.ndarray:
    """Boolean (N, N) mask of evaluated ``(i -> j)`` terms.

    ``video`` evaluates every ordered pair. ``pair`` evaluates frame pairs
    ``(i, i + gap)`` in both directions plus their self terms.
    """
    N = int(num_frames)
    if protocol == "video":
        return np.ones((N, N), bool)
    if protocol != "pair":
        raise ConfigError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")
    if gap < 1 or gap >= N:
        raise ConfigError(f"pair gap {gap} needs 1 <= gap < N={N}")
    m = np.zeros((N, N), bool)
    for i in range(N - gap):
        a, b = i, i + gap
        m[a, a] = m[b, b] = m[a, b] = m[b, a] = True
    return m


def frame_pairs(num_frames: int, gap: int = 5) -> list[tuple[int, int]]:
    return [(i, i + gap) for i in range(num_frames - gap)]


@dataclass
class MetricsReport:
    epe_mix: float | None = None
    epe_sta: float | None = None
    epe_dyn: float | None = None
    sdd: float | None = None
    ca: float | None = None
    apd3d: list | None = None
    apd3d_mean: float | None = None
    aj: float | None = None
    alignment: dict | None = None
    scene_scale: float | None = None
    wall_times: dict = dc_field(default_factory=dict)
    absent: dict = dc_field(default_factory=dict)

    def to_dict(self, timings: bool = False) -> dict:
        d = {k: _clean(v) for k, v in self.__dict__.items() if k != "wall_times"}
        if timings:
            d["wall_times"] = dict(self.wall_times)
        return d


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, np.generic):
        return _clean(v.item())
    return v


def evaluate_sequence(field: TrajectoryField, gt: GroundTruthBundle, protocol: str = "video", align: str = "none",
                      pair_gap: int = 5, thresholds=None) -> MetricsReport:
    """All metrics for one sequence; failures become entries in ``report.absent``."""
    rep = MetricsReport(scene_scale=gt.scene_scale)
    pairs = protocol_pairs(gt.num_frames, protocol, pair_gap)
    sim = False
    clock = time.perf_counter

    t0 = clock()
    if align == "sim3":
        try:
            sim = metrics.alignment_for(field, gt)
            rep.alignment = {"type": "sim3", **sim.to_dict()}
        except AlignmentError as exc:
            log.warning("sim3 alignment failed, evaluating unaligned: %s", exc)
            rep.absent["alignment"] = str(exc)
            sim = False
    elif align != "none":
        raise ConfigError(f"unknown alignment {align!r}")
    rep.wall_times["align"] = clock() - t0

    t0 = clock()
    try:
        rep.epe_mix, rep.epe_sta, rep.epe_dyn = metrics.epe(field, gt, sim, pairs)
    except MetricError as exc:
        rep.absent["epe"] = str(exc)
    rep.wall_times["epe"] = clock() - t0

    t0 = clock()
    try:
        if gt.static_mask is None:
            raise MetricError("ground truth has no static mask")
        rep.sdd = metrics.sdd(field, gt.static_mask)
    except MetricError as exc:
        rep.absent["sdd"] = str(exc)
    rep.wall_times["sdd"] = clock() - t0

    t0 = clock()
    try:
        if gt.correspondences is None:
            raise MetricError("ground truth has no correspondences")
        rep.ca = metrics.ca(field, gt.correspondences, gt.static_mask, dynamic_only=True)
    except MetricError as exc:
        rep.absent["ca"] = str(exc)
    rep.wall_times["ca"] = clock() - t0

    t0 = clock()
    try:
        apd, apd_mean, aj, _ = metrics.apd_aj(field, gt, thresholds, sim, pairs)
        rep.apd3d, rep.apd3d_mean, rep.aj = [list(x) for x in apd], apd_mean, aj
    except MetricError as exc:
        rep.absent["apd_aj"] = str(exc)
    rep.wall_times["apd_aj"] = clock() - t0
    return rep


def _mean(values):
    vals = [v for v in values if v is not None and math.isfinite(v)]
    return float(np.mean(vals)) if vals else None


def aggregate(reports: list[MetricsReport]) -> MetricsReport:
    """Unweighted mean over sequences of every scalar metric."""
    out = MetricsReport()
    for name in ("epe_mix", "epe_sta", "epe_dyn", "sdd", "ca", "apd3d_mean", "aj", "scene_scale"):
        setattr(out, name, _mean(getattr(r, name) for r in reports))
        if getattr(out, name) is None:
            out.absent[name] = "absent in every sequence"
    apds = [r.apd3d for r in reports if r.apd3d]
    if apds and all(len(a) == len(apds[0]) for a in apds):
        out.apd3d = [[_mean(a[k][0] for a in apds), _mean(a[k][1] for a in apds)] for k in range(len(apds[0]))]
    for r in reports:
        for k, v in r.wall_times.items():
            out.wall_times[k] = out.wall_times.get(k, 0.0) + v
    return out


def benchmark_run(pred_fields, gt_bundles, protocol: str = "video", align: str = "none", pair_gap: int = 5,
                  thresholds=None, names=None) -> dict:
    """Evaluate paired lists of predicted fields and GT bundles.

    Returns a JSON-ready report dict with per-sequence results and their
    unweighted mean; timings live in ``report["_timings"]`` and are stripped
    by :func:`report_json` unless requested.
    """
    pred_fields, gt_bundles = list(pred_fields), list(gt_bundles)
    if len(pred_fields) != len(gt_bundles):
        raise ConfigError(f"{len(pred_fields)} predictions for {len(gt_bundles)} ground-truth sequences")
    names = list(names) if names is not None else [f"seq{k:03d}" for k in range(len(gt_bundles))]
    reports = []
    for name, f, gt in zip(names, pred_fields, gt_bundles):
        log.info("evaluating %s", name)
        reports.append(evaluate_sequence(f, gt, protocol, align, pair_gap, thresholds))
    summary = aggregate(reports)
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "role": "report",
        "protocol": protocol,
        "pair_gap": pair_gap if protocol == "pair" else None,
        "align": align,
        "summary": summary.to_dict(),
        "sequences": {n: r.to_dict() for n, r in zip(names, reports)},
        "_timings": {"summary": summary.wall_times, **{n: r.wall_times for n, r in zip(names, reports)}},
    }


def report_json(report: dict, timings: bool = False) -> str:
    d = {k: v for k, v in report.items() if k != "_timings"}
    if timings:
        d["wall_times"] = report.get("_timings", {})
    return json.dumps(_clean(d), sort_keys=True, indent=2) + "\n"


def format_summary(report: dict) -> str:
    """Human-readable table; CA shown in units of 1e-2 and SDD in 1e-3."""
    s = report["summary"]

    def f(v, mult=1.0):
        return "   n/a" if v is None else f"{v * mult:.4f}"

    lines = [
        f"protocol={report['protocol']} align={report['align']} sequences={len(report['sequences'])}",
        "EPE_mix  EPE_sta  EPE_dyn  CA(1e-2)  SDD(1e-3)  APD3D  AJ",
        "  ".join([f(s["epe_mix"]), f(s["epe_sta"]), f(s["epe_dyn"]), f(s["ca"], 1e2), f(s["sdd"], 1e3),
                   f(s["apd3d_mean"]), f(s["aj"])]),
    ]
    return "\n".join(lines)
