import json
import subprocess
import sys

import pytest

from trajfield.cli import run
from trajfield.derive import read_pgm
from trajfield.tfz import load_field, read_tensor


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run(["synth", "--preset", "mixed", "--frames", "4", "--size", "16", "--out", str(root / "gt")]) == 0
    assert run(["fit", "--gt", str(root / "gt"), "--control-points", "10", "--out", str(root / "f.tfz")]) == 0
    return root


def test_end_to_end_oracle(tmp_path, capsys):
    assert run(["synth", "--preset", "static_room", "--frames", "8", "--size", "64", "--out", str(tmp_path / "gt")]) == 0
    assert run(["fit", "--gt", str(tmp_path / "gt"), "--control-points", "10", "--out", str(tmp_path / "f.tfz")]) == 0
    capsys.readouterr()
    assert run(["eval", "--pred", str(tmp_path / "f.tfz"), "--gt", str(tmp_path / "gt")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["summary"]["epe_mix"] <= 1e-3


def test_eval_report_file_and_directories(pipeline, tmp_path, capsys):
    preds, gts = tmp_path / "preds", tmp_path / "gts"
    preds.mkdir()
    gts.mkdir()
    for name in ("a", "b"):
        (preds / name).symlink_to(pipeline / "f.tfz")
        (gts / name).symlink_to(pipeline / "gt")
    out = tmp_path / "r.json"
    assert run(["eval", "--pred", str(preds), "--gt", str(gts), "--out", str(out), "--align", "sim3"]) == 0
    assert "EPE_mix" in capsys.readouterr().out
    report = json.loads(out.read_text())
    assert sorted(report["sequences"]) == ["a", "b"]
    assert report["summary"]["epe_mix"] <= 1e-3
    assert "wall_times" not in report


def test_optimize_runs(pipeline, tmp_path):
    out = tmp_path / "opt.tfz"
    args = ["optimize", "--gt", str(pipeline / "gt"), "--control-points", "4", "--iters", "5", "--out", str(out)]
    assert run(args) == 0
    hist = load_field(out).info["loss_history"]
    assert len(hist) == 6 and all(b <= a for a, b in zip(hist, hist[1:]))
    cfg = tmp_path / "w.json"
    cfg.write_text(json.dumps({"alpha": 0.5, "lambda_static": 0.0}))
    assert run(args[:-1] + [str(tmp_path / "o2"), "--config", str(cfg)]) == 0
    cfg.write_text(json.dumps({"bogus": 1.0}))
    assert run(args[:-1] + [str(tmp_path / "o3"), "--config", str(cfg)]) == 1


def test_derive_products(pipeline, tmp_path):
    out = tmp_path / "d"
    argv = ["derive", "--field", str(pipeline / "f.tfz"), "--out", str(out), "--mask", "--flow", "--project",
            "--samples", "4", "--stride", "8", "--forecast", "0.2", "--fuse", "1", "--cameras"]
    assert run(argv) == 0
    meta = json.loads((out / "derived.json").read_text())
    assert meta["files"] == sorted(meta["files"])
    assert (out / "forecast.ply").read_text().startswith("ply\n")
    assert (out / "fused.ply").exists()
    assert read_pgm(out / "mask_000.pgm").shape == (16, 16)
    assert read_tensor(out / "flow.bin").shape == (4, 16, 16, 3)
    assert meta["cameras"]["source"] == "estimated" and len(meta["cameras"]["frames"]) == 4
    tracks = meta["trajectories_2d"]["tracks"]
    assert len(tracks) == 4 and len(tracks[0]["t"]) == 4 and len(tracks[0]["pixels"]) == 4
    assert run(argv + ["--gt", str(pipeline / "gt")]) == 0


def test_gradcheck_and_info(pipeline, capsys):
    assert run(["gradcheck", "--seed", "1", "--trials", "16"]) == 0
    assert "max relative error" in capsys.readouterr().out
    assert run(["info", str(pipeline / "f.tfz")]) == 0
    text = capsys.readouterr().out
    assert "field" in text and "control_points" in text


def test_exit_codes(tmp_path, pipeline):
    assert run(["frobnicate"]) == 1
    assert run(["synth", "--preset", "nowhere", "--out", str(tmp_path / "x")]) == 1
    assert run(["fit", "--gt", str(tmp_path / "missing"), "--out", str(tmp_path / "y")]) == 1
    assert run(["info", str(tmp_path)]) == 1
    assert run(["synth", "--preset", "static_room", "--frames", "3", "--size", "8", "--out", str(tmp_path / "g")]) == 0
    # 3 frames cannot determine 10 control points without a ridge
    assert run(["fit", "--gt", str(tmp_path / "g"), "--ridge", "0", "--out", str(tmp_path / "z")]) == 2
    assert run(["gradcheck", "--eps", "10", "--trials", "4", "--control-points", "4"]) == 2


def test_global_options_anywhere(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["--seed", "3", "synth", "--preset", "rigid_orbit", "--frames", "3", "--size", "8", "--out", str(a)]) == 0
    assert run(["synth", "--preset", "rigid_orbit", "--frames", "3", "--size", "8", "--out", str(b), "--seed", "3"]) == 0
    assert tree_bytes(a) == tree_bytes(b)
    assert json.loads((a / "manifest.json").read_text())["provenance"]["seed"] == 3


def pipeline_outputs(root, threads_args, monkeypatch, env=None):
    """Run every subcommand with identical relative argv inside ``root``."""
    root.mkdir()
    with monkeypatch.context() as m:
        m.chdir(root)
        if env:
            for k, v in env.items():
                m.setenv(k, v)
        base = ["--seed", "5"] + threads_args
        assert run(base + ["synth", "--preset", "two_body_occlusion", "--frames", "4", "--size", "12", "--out", "gt"]) == 0
        assert run(base + ["fit", "--gt", "gt", "--control-points", "7", "--out", "f"]) == 0
        assert run(base + ["optimize", "--gt", "gt", "--control-points", "4", "--iters", "3", "--out", "o"]) == 0
        assert run(base + ["eval", "--pred", "f", "--gt", "gt", "--out", "r.json"]) == 0
        assert run(base + ["derive", "--field", "f", "--out", "d", "--mask", "--flow", "--fuse", "0", "--cameras"]) == 0
    return tree_bytes(root)


def test_determinism_across_threads(tmp_path, monkeypatch):
    monkeypatch.delenv("TRAJFIELD_THREADS", raising=False)
    one = pipeline_outputs(tmp_path / "one", [], monkeypatch)
    again = pipeline_outputs(tmp_path / "again", [], monkeypatch)
    two = pipeline_outputs(tmp_path / "two", ["--threads", "2"], monkeypatch)
    env = pipeline_outputs(tmp_path / "env", [], monkeypatch, {"TRAJFIELD_THREADS": "3"})
    assert one == again == two == env
    assert len(one) > 20


def test_bad_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv("TRAJFIELD_THREADS", "many")
    assert run(["synth", "--preset", "static_room", "--frames", "2", "--size", "8", "--out", str(tmp_path / "g")]) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "trajfield", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "trajfield" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "trajfield", "eval"], capture_output=True, text=True)
    assert proc.returncode == 1
