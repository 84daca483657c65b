import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trajfield import TrajectoryField, curve_spec
from trajfield.errors import FormatError
from trajfield.tfz import (
    MAGIC,
    load_bundle,
    load_field,
    read_container,
    read_role,
    read_tensor,
    save_bundle,
    save_field,
    write_container,
    write_tensor,
)


def tree_bytes(root):
    return {p.name: p.read_bytes() for p in sorted(root.iterdir())}


def test_tensor_layout_by_hand(tmp_path):
    write_tensor(tmp_path / "a.bin", np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
    data = (tmp_path / "a.bin").read_bytes()
    expect = b"TFZ1\0\0\0\0" + struct.pack("<3I", 2, 2, 3) + struct.pack("<6f", 1, 2, 3, 4, 5, 6)
    assert data == expect
    write_tensor(tmp_path / "s.bin", np.float64(2.5))
    assert (tmp_path / "s.bin").read_bytes() == MAGIC + struct.pack("<I", 0) + struct.pack("<f", 2.5)
    assert read_tensor(tmp_path / "s.bin").shape == ()


@settings(max_examples=30, deadline=None)
@given(shape=st.lists(st.integers(0, 4), min_size=0, max_size=4), seed=st.integers(0, 1000))
def test_tensor_round_trip(tmp_path_factory, shape, seed):
    arr = np.random.default_rng(seed).normal(size=shape).astype(np.float32)
    path = tmp_path_factory.mktemp("t") / "x.bin"
    write_tensor(path, arr)
    back = read_tensor(path)
    assert back.dtype == np.float64 and back.shape == arr.shape
    np.testing.assert_array_equal(back, arr)


def test_tensor_errors(tmp_path):
    write_tensor(tmp_path / "a.bin", np.ones((2, 2)))
    data = (tmp_path / "a.bin").read_bytes()
    (tmp_path / "bad.bin").write_bytes(b"TFZ2" + data[4:])
    with pytest.raises(FormatError, match="magic"):
        read_tensor(tmp_path / "bad.bin")
    (tmp_path / "short.bin").write_bytes(data[:-4])
    with pytest.raises(FormatError, match="payload"):
        read_tensor(tmp_path / "short.bin")
    (tmp_path / "hdr.bin").write_bytes(data[:14])
    with pytest.raises(FormatError):
        read_tensor(tmp_path / "hdr.bin")


def test_container_validation(tmp_path):
    write_container(tmp_path / "c", {"role": "report"}, {"x": np.zeros(3)})
    manifest, tensors = read_container(tmp_path / "c")
    assert manifest["schema_version"] == 1
    assert manifest["tensors"] == [{"dtype": "f32", "file": "x.bin", "name": "x", "shape": [3]}]
    with pytest.raises(FormatError):
        write_container(tmp_path / "d", {"role": "movie"}, {})
    m = json.loads((tmp_path / "c" / "manifest.json").read_text())
    m["tensors"][0]["shape"] = [4]
    (tmp_path / "c" / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(FormatError, match="shape"):
        read_container(tmp_path / "c")
    del m["schema_version"]
    (tmp_path / "c" / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(FormatError, match="schema_version"):
        read_container(tmp_path / "c")
    with pytest.raises(FormatError):
        read_role(tmp_path / "missing")


def test_field_round_trip_byte_identical(tmp_path):
    rng = np.random.default_rng(0)
    valid = rng.random((3, 3, 4)) > 0.2
    f = TrajectoryField(curve_spec("bezier", 7), rng.normal(size=(3, 7, 3, 4, 3)), rng.uniform(1, 2, size=(3, 7, 3, 4)),
                        timestamps=[0.0, 0.7, 1.0], valid=valid, info={"loss_history": [1.0, 0.5]})
    save_field(tmp_path / "a", f, seed=3, preset="mixed")
    g = load_field(tmp_path / "a")
    assert read_role(tmp_path / "a") == "field"
    assert g.spec == f.spec
    np.testing.assert_array_equal(g.timestamps, [0.0, 0.7, 1.0])
    np.testing.assert_array_equal(g.valid, valid)
    np.testing.assert_allclose(g.control_points, f.control_points, rtol=1e-7)
    assert g.info["provenance"]["seed"] == 3 and g.info["loss_history"] == [1.0, 0.5]
    save_field(tmp_path / "b", g)
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
    write_container(tmp_path / "c", *read_container(tmp_path / "a"))
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "c")


def test_bundle_round_trip(tmp_path, bundle_cache):
    gt = bundle_cache("two_body_occlusion")
    save_bundle(tmp_path / "gt", gt, seed=0, preset="two_body_occlusion")
    back = load_bundle(tmp_path / "gt")
    for name in ("valid", "visible", "static_mask", "rigid_labels", "correspondences", "primitive_ids"):
        np.testing.assert_array_equal(getattr(back, name), getattr(gt, name))
    np.testing.assert_allclose(back.points, gt.points, rtol=1e-7, atol=1e-7 * gt.scene_scale)
    np.testing.assert_array_equal(back.timestamps, gt.timestamps)
    assert back.scene_scale == gt.scene_scale
    assert back.provenance["preset"] == "two_body_occlusion"
    for a, b in zip(back.cameras, gt.cameras):
        assert a.focal == pytest.approx(b.focal, rel=1e-7)
    save_bundle(tmp_path / "again", back, provenance=back.provenance)
    assert tree_bytes(tmp_path / "gt") == tree_bytes(tmp_path / "again")
    with pytest.raises(FormatError, match="role"):
        load_field(tmp_path / "gt")
