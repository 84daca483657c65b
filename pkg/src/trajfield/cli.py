"""Command-line entry point: ``trajfield <subcommand> [options]``.

Exit codes: 0 success, 1 input error (bad flags, missing or malformed files),
2 numeric error (rank deficiency, divergence, failed gradient check).
Logs go to stderr; results go to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, bench, derive, tfz
from .curves import FAMILIES, curve_spec
from .errors import ConfigError, InputError, NumericError
from .fitting import DEFAULT_RIDGE, fit_field
from .losses import LossWeights, grad_check, random_problem
from .optimize import INITS, OptimizeConfig, optimize_field
from .synth import PRESETS, build_scene, generate_bundle

log = logging.getLogger("trajfield")

GRADCHECK_TOL = 1e-5


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; input errors here exit with 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get("TRAJFIELD_THREADS", "1")
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"TRAJFIELD_THREADS must be an integer, got {env!r}")
    if n < 1:
        raise ConfigError("threads must be >= 1")
    return n


def _size(text: str) -> tuple[int, int]:
    """``64`` or ``WxH``."""
    parts = text.lower().split("x")
    try:
        dims = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size {text!r}")
    if len(dims) == 1:
        dims = dims * 2
    if len(dims) != 2 or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"bad size {text!r}")
    return dims[0], dims[1]


def _csv_floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad float list {text!r}")


def _write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    W, H = args.size
    scene = build_scene(args.preset, args.seed)
    gt = generate_bundle(scene, args.frames, H, W, threads=_threads(args))
    tfz.save_bundle(args.out, gt, seed=args.seed, preset=args.preset)
    print(f"wrote {args.preset} bundle to {args.out}: N={gt.num_frames} {W}x{H} "
          f"scale={gt.scene_scale:.6g} correspondences={len(gt.correspondences)}")
    return 0


def _provenance_from(gt, args, **extra) -> dict:
    src = getattr(gt, "provenance", {}) or {}
    return {"tool_version": __version__, "seed": args.seed, "preset": src.get("preset"), **extra}


def cmd_fit(args) -> int:
    gt = tfz.load_bundle(args.gt)
    spec = curve_spec(args.family, args.control_points)
    field = fit_field(gt, spec, ridge=args.ridge, threads=_threads(args))
    field = field.replace(info={**field.info, "provenance": _provenance_from(gt, args)})
    tfz.save_field(args.out, field)
    print(f"fit {spec.family} D={spec.num_control_points}: residual rms {field.info['fit_residual_rms']:.6g}")
    return 0


def cmd_optimize(args) -> int:
    gt = tfz.load_bundle(args.gt)
    spec = curve_spec(args.family, args.control_points)
    weights = LossWeights.from_json(args.config) if args.config else LossWeights()
    config = OptimizeConfig(iters=args.iters, step=args.step, init=args.init, seed=args.seed)
    field, history = optimize_field(gt, spec, weights, config)
    info = {**field.info, "loss_history": [float(h) for h in history], "weights": weights.to_dict(),
            "provenance": _provenance_from(gt, args)}
    tfz.save_field(args.out, field.replace(info=info))
    print(f"optimized {len(history) - 1} iterations: loss {history[0]:.6g} -> {history[-1]:.6g}")
    return 0


def _sequence_dirs(pred: Path, gt: Path) -> tuple[list[Path], list[Path], list[str]]:
    """Single containers, or two directories of same-named containers."""
    if (pred / tfz.MANIFEST).is_file():
        if not (gt / tfz.MANIFEST).is_file():
            raise InputError(f"{gt}: not a TFZ container")
        return [pred], [gt], [pred.name or "seq000"]
    if not pred.is_dir():
        raise InputError(f"{pred}: no such container or directory")
    names = sorted(p.name for p in pred.iterdir() if (p / tfz.MANIFEST).is_file())
    if not names:
        raise InputError(f"{pred}: contains no TFZ containers")
    missing = [n for n in names if not (gt / n / tfz.MANIFEST).is_file()]
    if missing:
        raise InputError(f"no ground truth for sequences {missing} under {gt}")
    return [pred / n for n in names], [gt / n for n in names], names


def cmd_eval(args) -> int:
    preds, gts, names = _sequence_dirs(Path(args.pred), Path(args.gt))
    fields = [tfz.load_field(p) for p in preds]
    bundles = [tfz.load_bundle(g) for g in gts]
    report = bench.benchmark_run(fields, bundles, protocol=args.protocol, align=args.align,
                                 pair_gap=args.pair_gap, thresholds=args.thresholds, names=names)
    text = bench.report_json(report, timings=args.timings)
    if args.out:
        Path(args.out).write_text(text)
        print(bench.format_summary(report))
    else:
        sys.stdout.write(text)
    return 0


def _camera_source(field, gt_path):
    if gt_path:
        gt = tfz.load_bundle(gt_path)
        if gt.has_cameras:
            return gt.cameras, "ground_truth"
    return derive.estimate_cameras(field), "estimated"


def cmd_derive(args) -> int:
    field = tfz.load_field(args.field)
    if not (args.mask or args.flow or args.project or args.forecast is not None or args.fuse is not None
            or args.cameras):
        raise ConfigError("choose at least one product: --mask, --flow, --project, --forecast, --fuse, --cameras")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary: dict = {"schema_version": 1, "role": "derived", "field": str(args.field), "files": []}

    if args.mask:
        thr = args.threshold if args.threshold is not None else derive.default_mask_threshold(field)
        mask = derive.dynamic_mask(field, thr)
        for i in range(field.num_frames):
            name = f"mask_{i:03d}.pgm"
            derive.write_pgm(out / name, mask[i])
            summary["files"].append(name)
        summary["mask"] = {"threshold": float(thr), "dynamic_fraction": float(mask[field.valid].mean())}

    if args.flow:
        flow = np.stack([derive.scene_flow(field, i) for i in range(field.num_frames)])
        tfz.write_tensor(out / "flow.bin", flow)
        summary["files"].append("flow.bin")
        summary["flow"] = {"shape": list(flow.shape), "max_norm": float(np.linalg.norm(flow, axis=-1).max())}

    if args.forecast is not None:
        pts = np.stack([derive.forecast_frame(field, i, args.forecast) for i in range(field.num_frames)])
        valid = field.valid
        labels = np.argwhere(valid)[:, [0, 2, 1]]  # (i, u, v)
        derive.write_ply(out / "forecast.ply", pts[valid], labels)
        summary["files"].append("forecast.ply")
        summary["forecast"] = {"dt": float(args.forecast), "points": int(valid.sum())}

    if args.fuse is not None:
        field._check_frame(args.fuse)
        sources = args.sources if args.sources else range(field.num_frames)
        pts, labels = derive.fuse_canonical(field, args.fuse, sources)
        derive.write_ply(out / "fused.ply", pts, labels)
        summary["files"].append("fused.ply")
        summary["fuse"] = {"frame": int(args.fuse), "points": int(len(pts))}

    if args.cameras or args.project:
        cams, source = _camera_source(field, args.gt)
        if args.cameras:
            summary["cameras"] = {"source": source,
                                  "frames": [c.to_dict() if c is not None else None for c in cams]}
        if args.project:
            i = field._check_frame(args.frame)
            if cams[i] is None or any(c is None for c in cams):
                raise NumericError("projection needs a camera for every frame")
            tracks = []
            for v in range(0, field.height, args.stride):
                for u in range(0, field.width, args.stride):
                    if not field.valid[i, v, u]:
                        continue
                    ts, pix, front = derive.project_2d(field, cams, i, u, v, args.samples)
                    tracks.append({"frame": i, "u": u, "v": v, "t": ts.tolist(),
                                   "pixels": [p.tolist() if ok else None for p, ok in zip(pix, front)]})
            summary["trajectories_2d"] = {"camera_source": source, "samples": args.samples, "tracks": tracks}

    summary["files"].sort()
    _write_json(out / "derived.json", summary)
    print(f"wrote {len(summary['files']) + 1} files to {out}")
    return 0


def cmd_gradcheck(args) -> int:
    worst = 0.0
    results = {}
    for D in args.control_points:
        field, gt = random_problem(args.frames, args.size, args.size, D, args.family, seed=args.seed)
        rep = grad_check(field, gt, eps=args.eps, trials=args.trials, seed=args.seed)
        results[f"D={D}"] = rep.max_rel_error
        worst = max(worst, rep.max_rel_error)
        print(f"D={D}: max relative error {rep.max_rel_error:.3e} over {rep.trials} coordinates")
    print(f"max relative error {worst:.3e}")
    if worst > args.tol:
        log.error("gradient check failed: %.3e > %.1e", worst, args.tol)
        return 2
    return 0


def cmd_info(args) -> int:
    manifest, tensors = tfz.read_container(args.path)
    print(f"role: {manifest['role']}  schema_version: {manifest['schema_version']}")
    if "curve_spec" in manifest:
        cs = manifest["curve_spec"]
        print(f"curve: {cs['family']} D={cs['num_control_points']} degree={cs['degree']}")
    if "timestamps" in manifest:
        print(f"frames: {len(manifest['timestamps'])}")
    if "scene_scale" in manifest:
        print(f"scene_scale: {manifest['scene_scale']:.6g}")
    prov = manifest.get("provenance") or {}
    print("provenance: " + ", ".join(f"{k}={prov[k]}" for k in sorted(prov)))
    for name in sorted(tensors):
        a = tensors[name]
        print(f"  {name:16s} {'x'.join(map(str, a.shape)) or 'scalar':>20s}  "
              f"min {a.min() if a.size else float('nan'):.4g}  max {a.max() if a.size else float('nan'):.4g}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    def global_options(suppress: bool) -> argparse.ArgumentParser:
        # Subcommands accept the global options too; suppressing their defaults
        # keeps a value given before the subcommand from being overwritten.
        def dflt(v):
            return argparse.SUPPRESS if suppress else v

        g = _Parser(add_help=False)
        g.add_argument("--seed", type=int, default=dflt(0), help="seed for all randomness (default 0)")
        g.add_argument("--threads", type=int, default=dflt(None),
                       help="worker threads (default: $TRAJFIELD_THREADS or 1)")
        g.add_argument("-v", "--verbose", action="count", default=dflt(0))
        return g

    common = global_options(suppress=True)
    p = _Parser(prog="trajfield", description="Trajectory-field toolkit.", parents=[global_options(False)])
    p.add_argument("--version", action="version", version=f"trajfield {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="render a synthetic ground-truth bundle")
    s.add_argument("--preset", choices=PRESETS, required=True)
    s.add_argument("--frames", type=int, default=8)
    s.add_argument("--size", type=_size, default=(64, 64), help="N (square) or WxH")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    f = sub.add_parser("fit", parents=[common], help="least-squares fit of a field to a bundle")
    f.add_argument("--gt", required=True)
    f.add_argument("--control-points", type=int, default=10)
    f.add_argument("--family", choices=FAMILIES, default="bspline")
    f.add_argument("--ridge", type=float, default=DEFAULT_RIDGE)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    o = sub.add_parser("optimize", parents=[common], help="minimize the training objective directly")
    o.add_argument("--gt", required=True)
    o.add_argument("--control-points", type=int, default=10)
    o.add_argument("--family", choices=FAMILIES, default="bspline")
    o.add_argument("--config", help="loss weights (JSON)")
    o.add_argument("--iters", type=int, default=500)
    o.add_argument("--step", type=float, default=1.0)
    o.add_argument("--init", choices=INITS, default="centroid")
    o.add_argument("--out", required=True)
    o.set_defaults(func=cmd_optimize)

    e = sub.add_parser("eval", parents=[common], help="evaluate fields against ground truth")
    e.add_argument("--pred", required=True, help="field container or directory of them")
    e.add_argument("--gt", required=True, help="bundle container or directory of them")
    e.add_argument("--align", choices=("none", "sim3"), default="none")
    e.add_argument("--protocol", choices=bench.PROTOCOLS, default="video")
    e.add_argument("--pair-gap", type=int, default=5)
    e.add_argument("--thresholds", type=_csv_floats, default=None, help="APD thresholds, comma-separated")
    e.add_argument("--timings", action="store_true", help="include wall-clock timings in the report")
    e.add_argument("--out", help="report path (default: stdout)")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("derive", parents=[common], help="masks, flow, 2D tracks, forecasts, fusion, cameras")
    d.add_argument("--field", required=True)
    d.add_argument("--gt", help="bundle whose cameras are used instead of estimating them")
    d.add_argument("--out", required=True, help="output directory")
    d.add_argument("--mask", action="store_true")
    d.add_argument("--threshold", type=float, default=None)
    d.add_argument("--flow", action="store_true")
    d.add_argument("--project", action="store_true")
    d.add_argument("--samples", type=int, default=16)
    d.add_argument("--frame", type=int, default=0, help="source frame for --project")
    d.add_argument("--stride", type=int, default=8, help="pixel stride for --project")
    d.add_argument("--forecast", type=float, default=None, metavar="DT")
    d.add_argument("--fuse", type=int, default=None, metavar="FRAME")
    d.add_argument("--sources", type=int, nargs="+", default=None, help="source frames for --fuse")
    d.add_argument("--cameras", action="store_true")
    d.set_defaults(func=cmd_derive)

    g = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of the loss gradients")
    g.add_argument("--control-points", type=int, nargs="+", default=[4, 7, 10])
    g.add_argument("--family", choices=FAMILIES, default="bspline")
    g.add_argument("--frames", type=int, default=3)
    g.add_argument("--size", type=int, default=8)
    g.add_argument("--eps", type=float, default=1e-4)
    g.add_argument("--trials", type=int, default=64)
    g.add_argument("--tol", type=float, default=GRADCHECK_TOL)
    g.set_defaults(func=cmd_gradcheck)

    i = sub.add_parser("info", parents=[common], help="summarize a TFZ container")
    i.add_argument("path")
    i.set_defaults(func=cmd_info)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        log.error("%s", exc)
        return 1
    except (FileNotFoundError, NotADirectoryError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return 1
    except (NumericError, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.error("%s", exc)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
