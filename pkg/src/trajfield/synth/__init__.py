"""Synthetic 4D ground truth by ray casting analytic primitives."""

from .generate import generate_bundle
from .presets import PRESETS, build_scene
from .scene import CameraPath, Hit, Motion, Primitive, Scene, cast_rays, material_trajectory, ray_cast

__all__ = [
    "CameraPath", "Hit", "Motion", "PRESETS", "Primitive", "Scene",
    "build_scene", "cast_rays", "generate_bundle", "material_trajectory", "ray_cast",
]
