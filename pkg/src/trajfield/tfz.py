"""TFZ container: a directory holding ``manifest.json`` plus raw tensor files.

Tensor file layout (all little-endian)::

    bytes 0-7    magic  b"TFZ1\\0\\0\\0\\0"
    bytes 8-11   rank   uint32
    next 4*rank  dims   uint32 each
    rest         payload float32, row-major

The manifest is JSON with sorted keys and two-space indent::

    {
      "schema_version": 1,
      "role": "field" | "bundle" | "report",
      "tensors": [{"name": ..., "dtype": "f32", "shape": [...], "file": ...}],
      "curve_spec": {...},            # fields
      "timestamps": [...],            # float64, exact
      "provenance": {"tool_version": ..., "seed": ..., "preset": ...},
      ...role-specific keys
    }

Integer and boolean arrays are stored as float32 (exact below 2**24).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import __version__
from .bundle import GroundTruthBundle
from .curves import CurveSpec
from .errors import FormatError
from .field import TrajectoryField

MAGIC = b"TFZ1\x00\x00\x00\x00"
SCHEMA_VERSION = 1
MANIFEST = "manifest.json"
ROLES = ("field", "bundle", "report")


def write_tensor(path, array) -> None:
    a = np.asarray(array, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", a.ndim))
        fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
        fh.write(a.tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise FormatError(f"{path}: bad magic {data[:8]!r}")
    if len(data) < 12:
        raise FormatError(f"{path}: truncated header")
    (rank,) = struct.unpack_from("<I", data, 8)
    off = 12 + 4 * rank
    if len(data) < off:
        raise FormatError(f"{path}: truncated shape header")
    shape = struct.unpack_from(f"<{rank}I", data, 12)
    n = int(np.prod(shape, dtype=np.int64))
    if len(data) - off != 4 * n:
        raise FormatError(f"{path}: payload is {len(data) - off} bytes, shape {shape} needs {4 * n}")
    return np.frombuffer(data, dtype="<f4", offset=off).reshape(shape).astype(np.float64)


def manifest_bytes(manifest: dict) -> bytes:
    return (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode()


def write_container(path, manifest: dict, tensors: dict[str, np.ndarray]) -> None:
    """Write tensors and a manifest; the manifest's tensor table is rebuilt from ``tensors``."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    table = []
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        fname = f"{name}.bin"
        write_tensor(root / fname, arr)
        table.append({"name": name, "dtype": "f32", "shape": [int(s) for s in arr.shape], "file": fname})
    m = dict(manifest)
    m.setdefault("schema_version", SCHEMA_VERSION)
    m["tensors"] = table
    if m.get("role") not in ROLES:
        raise FormatError(f"manifest role must be one of {ROLES}")
    (root / MANIFEST).write_bytes(manifest_bytes(m))


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    root = Path(path)
    mpath = root / MANIFEST
    if not mpath.is_file():
        raise FormatError(f"{root}: no {MANIFEST}")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{mpath}: {exc}") from exc
    if "schema_version" not in manifest:
        raise FormatError(f"{mpath}: missing schema_version")
    if manifest.get("role") not in ROLES:
        raise FormatError(f"{mpath}: role must be one of {ROLES}")
    tensors = {}
    for entry in manifest.get("tensors", []):
        if entry.get("dtype") != "f32":
            raise FormatError(f"tensor {entry.get('name')}: unsupported dtype {entry.get('dtype')}")
        arr = read_tensor(root / entry["file"])
        if list(arr.shape) != list(entry["shape"]):
            raise FormatError(f"tensor {entry['name']}: declared shape {entry['shape']} != file shape {list(arr.shape)}")
        tensors[entry["name"]] = arr
    return manifest, tensors


def _provenance(seed=None, preset=None, extra=None) -> dict:
    p = {"tool_version": __version__, "seed": seed, "preset": preset}
    p.update(extra or {})
    return p


def save_field(path, field: TrajectoryField, seed=None, preset=None) -> None:
    info = dict(field.info)
    prov = info.pop("provenance", None) or _provenance(seed, preset)
    manifest = {
        "role": "field",
        "curve_spec": field.spec.to_dict(),
        "timestamps": [float(t) for t in field.timestamps],
        "provenance": prov,
        "info": info,
    }
    write_container(path, manifest, {
        "control_points": field.control_points,
        "confidences": field.confidences,
        "valid": field.valid,
    })


def load_field(path) -> TrajectoryField:
    manifest, t = read_container(path)
    if manifest["role"] != "field":
        raise FormatError(f"{path}: expected a field container, found role {manifest['role']!r}")
    info = dict(manifest.get("info", {}))
    info["provenance"] = manifest.get("provenance", {})
    return TrajectoryField(
        spec=CurveSpec.from_dict(manifest["curve_spec"]),
        control_points=t["control_points"],
        confidences=t["confidences"],
        timestamps=np.asarray(manifest["timestamps"], float),
        valid=t["valid"] > 0.5,
        info=info,
    )


_BUNDLE_TENSORS = ("points", "valid", "visible", "static_mask", "rigid_labels", "correspondences",
                   "focal", "principal", "quat", "translation", "depth", "primitive_ids")
_BOOL = ("valid", "visible", "static_mask")


def save_bundle(path, gt: GroundTruthBundle, seed=None, preset=None, provenance: dict | None = None) -> None:
    tensors = {name: getattr(gt, name) for name in _BUNDLE_TENSORS if getattr(gt, name) is not None}
    manifest = {
        "role": "bundle",
        "timestamps": [float(t) for t in gt.timestamps],
        "scene_scale": float(gt.scene_scale),
        "provenance": provenance or _provenance(seed, preset),
    }
    write_container(path, manifest, tensors)


def load_bundle(path) -> GroundTruthBundle:
    manifest, t = read_container(path)
    if manifest["role"] != "bundle":
        raise FormatError(f"{path}: expected a bundle container, found role {manifest['role']!r}")
    kw = {}
    for name in _BUNDLE_TENSORS:
        if name in t:
            kw[name] = t[name] > 0.5 if name in _BOOL else t[name]
    for name in ("rigid_labels", "primitive_ids", "correspondences"):
        if name in kw:
            kw[name] = np.rint(kw[name]).astype(np.int64)
    if "quat" in kw:
        kw["quat"] = kw["quat"] / np.linalg.norm(kw["quat"], axis=1, keepdims=True)
    gt = GroundTruthBundle(timestamps=np.asarray(manifest["timestamps"], float), scene_scale=manifest.get("scene_scale"), **kw)
    gt.provenance = manifest.get("provenance", {})
    return gt


def read_role(path) -> str:
    root = Path(path)
    try:
        return json.loads((root / MANIFEST).read_text())["role"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise FormatError(f"{root}: not a TFZ container ({exc})") from exc
