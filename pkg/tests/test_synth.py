import numpy as np
import pytest

from trajfield.cameras import Camera
from trajfield.errors import ConfigError
from trajfield.synth import (
    PRESETS,
    CameraPath,
    Motion,
    Primitive,
    Scene,
    build_scene,
    cast_rays,
    generate_bundle,
    material_trajectory,
    ray_cast,
)

IDENTITY = np.array([0.0, 0.0, 0.0, 1.0])
DUMMY_PATH = CameraPath(np.zeros((1, 3)), (0.0, 0.0, 1.0))


def test_presets_contract():
    assert all(p.is_static for p in build_scene("static_room", 5).primitives)
    assert sum(not p.is_rigid for p in build_scene("pulsing_sphere", 3).primitives) == 1
    for preset in PRESETS:
        prims = build_scene(preset, 0).primitives
        assert any(p.is_static and p.shape == "plane" for p in prims)
    with pytest.raises(ConfigError):
        build_scene("forest")


def test_build_scene_deterministic():
    a, b = build_scene("rigid_orbit", 7), build_scene("rigid_orbit", 7)
    for pa, pb in zip(a.primitives, b.primitives):
        for k in pa.params:
            np.testing.assert_array_equal(pa.params[k], pb.params[k])
        if pa.motion is not None:
            np.testing.assert_array_equal(pa.motion.translation_points, pb.motion.translation_points)
    np.testing.assert_array_equal(a.camera_path.eye_points, b.camera_path.eye_points)
    c = build_scene("rigid_orbit", 8)
    assert not np.array_equal(a.camera_path.eye_points, c.camera_path.eye_points)


def test_ray_sphere_by_hand():
    scene = Scene([Primitive("sphere", {"center": np.array([0.0, 0.0, 5.0]), "radius": 1.0})], DUMMY_PATH)
    cam = Camera(100.0, 0.0, 0.0, IDENTITY, np.zeros(3))
    hit = ray_cast(scene, 0.0, cam, 0.0, 0.0)
    assert hit.primitive[0] == 0
    np.testing.assert_allclose(hit.point[0], [0, 0, 4], atol=1e-15)
    assert hit.depth[0] == pytest.approx(4.0, abs=1e-15)


def test_ray_plane_closed_form_and_parallel_miss():
    plane = Primitive("plane", {"point": np.zeros(3), "normal": np.array([0.0, 1.0, 0.0])})
    scene = Scene([plane], DUMMY_PATH)
    o = np.array([[0.3, 2.0, 0.7]])
    d = np.array([[0.1, -1.0, 0.2]])
    hit = cast_rays(scene, 0.0, o, d)
    np.testing.assert_allclose(hit.point[0], [0.5, 0.0, 1.1], atol=1e-12)
    assert hit.depth[0] == pytest.approx(2.0, abs=1e-12)
    miss = cast_rays(scene, 0.0, o, np.array([[1.0, 0.0, 0.0]]))
    assert miss.primitive[0] == -1 and np.isinf(miss.depth[0])


def test_box_hit_from_outside_and_inside():
    box = Primitive("box", {"center": np.zeros(3), "half_extents": np.array([1.0, 2.0, 3.0])})
    scene = Scene([box], DUMMY_PATH)
    hit = cast_rays(scene, 0.0, np.array([[0.0, 0.0, -10.0], [0.0, 0.0, 0.0]]), np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]))
    np.testing.assert_allclose(hit.depth, [7.0, 1.0])


def test_material_trajectories():
    static = Primitive("sphere", {"center": np.zeros(3), "radius": 1.0})
    path = np.array([[0.0, 0, 0], [1, 0, 0], [2, 1, 0], [3, 1, 1]])
    moving = Primitive("sphere", {"center": np.zeros(3), "radius": 1.0}, motion=Motion(path), is_static=False)
    pulsing = Primitive("sphere", {"center": np.zeros(3), "radius": 1.0}, pulse_amplitude=0.2, pulse_frequency=1.0,
                        is_static=False)
    scene = Scene([static, moving, pulsing], DUMMY_PATH)
    m = np.array([0.0, 1.0, 0.0])
    for t in (0.0, 0.3, 1.0):
        np.testing.assert_array_equal(material_trajectory(scene, 0, m, t), m)
        np.testing.assert_allclose(material_trajectory(scene, 1, m, t), m + moving.motion.translation(t), atol=1e-15)
    np.testing.assert_allclose(material_trajectory(scene, 2, np.array([1.0, 0, 0]), 0.25), [1.2, 0, 0], atol=1e-15)


def test_primitive_validation():
    with pytest.raises(ConfigError):
        Primitive("sphere", {"center": np.zeros(3), "radius": -1.0})
    with pytest.raises(ConfigError):
        Primitive("box", {"center": np.zeros(3), "half_extents": np.ones(3)}, pulse_amplitude=0.1, is_static=False)
    with pytest.raises(ConfigError):
        Primitive("sphere", {"center": np.zeros(3), "radius": 1.0}, motion=Motion(np.zeros((4, 3))))


def test_to_material_inverts_to_world():
    prim = build_scene("mixed", 0).primitives[-1]  # pulsing, moving sphere
    pts = np.random.default_rng(0).normal(size=(10, 3))
    for t in (0.1, 0.6):
        np.testing.assert_allclose(prim.to_material(prim.to_world(pts, t), t), pts, atol=1e-12)


# --- bundles -----------------------------------------------------------------


def test_static_room_bundle(bundle_cache):
    gt = bundle_cache("static_room")
    assert gt.static_mask.all()
    N = gt.num_frames
    for i in range(N):
        for j in range(N):
            np.testing.assert_array_equal(gt.points[i, j], gt.points[i, i])


def test_occlusion_present(bundle_cache):
    gt = bundle_cache("two_body_occlusion", N=6)
    assert np.any(gt.valid & ~gt.visible)
    assert not np.any(gt.visible & ~gt.valid)


@pytest.mark.parametrize("preset", PRESETS)
def test_bundle_invariants(bundle_cache, preset):
    gt = bundle_cache(preset)
    scene = build_scene(preset, 0)
    cams = gt.cameras
    H, W = gt.height, gt.width
    vv, uu = np.mgrid[0:H, 0:W]
    for i in range(gt.num_frames):
        # self positions equal depth back-projection and project back onto their pixel
        o, d = cams[i].rays(uu, vv)
        np.testing.assert_allclose(gt.points[i, i], o + gt.depth[i][..., None] * d, atol=1e-12 * gt.scene_scale)
        uv, _ = cams[i].project(gt.points[i, i])
        assert np.max(np.abs(uv - np.stack([uu, vv], -1))) <= 0.5
        # analytic exactness of every cross-frame sample
        mat = np.array([scene.primitives[k].to_material(gt.points[i, i][v, u][None], gt.timestamps[i])[0]
                        for (v, u), k in np.ndenumerate(gt.primitive_ids[i])]).reshape(H, W, 3)
        for j in range(gt.num_frames):
            expect = np.array([scene.primitives[k].to_world(mat[v, u][None], gt.timestamps[j])[0]
                               for (v, u), k in np.ndenumerate(gt.primitive_ids[i])]).reshape(H, W, 3)
            np.testing.assert_allclose(gt.points[i, j], expect, atol=1e-12 * gt.scene_scale)
    static = gt.static_mask
    for j in range(gt.num_frames):
        np.testing.assert_array_equal(gt.points[:, j][static], gt.self_points()[static])
    assert not np.any(gt.visible & ~gt.valid)


def test_correspondences_share_trajectories(bundle_cache):
    gt = bundle_cache("mixed", N=6)
    c = gt.correspondences
    assert len(c) > 0
    a = gt.points[c[:, 0], :, c[:, 2], c[:, 1]]
    b = gt.points[c[:, 3], :, c[:, 5], c[:, 4]]
    assert np.abs(a - b).max() <= 1e-9 * gt.scene_scale
    dynamic = ~gt.static_mask[c[:, 0], c[:, 2], c[:, 1]]
    assert dynamic.any()


def test_generation_deterministic_and_threads():
    scene = build_scene("two_body_occlusion", 3)
    a = generate_bundle(scene, 4, 12, 10)
    b = generate_bundle(scene, 4, 12, 10, threads=3)
    for name in ("points", "valid", "visible", "static_mask", "rigid_labels", "correspondences", "depth"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert a.points.shape == (4, 4, 12, 10, 3)


def test_correspondence_cap():
    gt = generate_bundle(build_scene("static_room", 0), 4, 16, 16, max_correspondences=5)
    assert len(gt.correspondences) <= 5


def test_generate_validation():
    with pytest.raises(ConfigError):
        generate_bundle(build_scene("static_room"), 1, 8, 8)
