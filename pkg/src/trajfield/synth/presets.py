"""Named scene presets.

Every preset sits inside the same closed room (floor, ceiling, four walls),
so every pixel ray hits something. The room spans x in [-5, 5], y in [0, 5]
(y is up) and z in [-5, 8]. All static primitives share rigid segment 0.
The seed jitters object placement and camera path within a few tenths of a
unit; it never changes which primitives exist.

=================  ======================================================
preset             contents
=================  ======================================================
static_room        two boxes and a sphere, all static; camera sweeps an arc
rigid_orbit        one static box; a box and a sphere on closed orbits
                   (the box also spins); camera drifts slowly
pulsing_sphere     one sphere that pulses radially while sliding sideways;
                   static camera
two_body_occlusion a sphere and a box crossing in depth order; static camera
mixed              static box, an orbiting box carrying the camera
                   (tracking shot), a pulsing sliding sphere
=================  ======================================================
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .scene import CameraPath, Motion, Primitive, Scene

PRESETS = ("static_room", "rigid_orbit", "pulsing_sphere", "two_body_occlusion", "mixed")


def room() -> list[Primitive]:
    planes = [
        ("floor", (0, 0, 0), (0, 1, 0)),
        ("ceiling", (0, 5, 0), (0, -1, 0)),
        ("wall_left", (-5, 0, 0), (1, 0, 0)),
        ("wall_right", (5, 0, 0), (-1, 0, 0)),
        ("wall_back", (0, 0, 8), (0, 0, -1)),
        ("wall_front", (0, 0, -5), (0, 0, 1)),
    ]
    return [Primitive("plane", {"point": np.array(p, float), "normal": np.array(n, float)}, name=name)
            for name, p, n in planes]


def _orbit(center, radius, phase=0.0, height=0.0, turns=1.0, count=10):
    """Control points whose cubic B-spline loosely follows a horizontal circle."""
    ang = phase + 2 * np.pi * turns * np.linspace(0.0, 1.0, count)
    c = np.asarray(center, float)
    pts = np.stack([c[0] + radius * np.cos(ang), c[1] + height * np.sin(ang), c[2] + radius * np.sin(ang)], axis=1)
    return pts - np.array([radius * np.cos(phase), 0.0, radius * np.sin(phase)])


def _line(start, end, count=4):
    s, e = np.asarray(start, float), np.asarray(end, float)
    return s + np.linspace(0.0, 1.0, count)[:, None] * (e - s)


def build_scene(preset: str, seed: int = 0) -> Scene:
    """Deterministic scene for ``(preset, seed)``."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; expected one of {PRESETS}")
    rng = np.random.default_rng([seed, PRESETS.index(preset)])
    j = lambda scale=0.2, n=3: rng.uniform(-scale, scale, size=n)  # noqa: E731
    prims = room()

    if preset == "static_room":
        prims += [
            Primitive("box", {"center": np.array([-1.6, 0.7, 3.0]) + j() * [1, 0, 1],
                              "half_extents": np.array([0.7, 0.7, 0.7])}, name="box_a"),
            Primitive("box", {"center": np.array([1.8, 0.5, 4.5]) + j() * [1, 0, 1],
                              "half_extents": np.array([0.5, 0.5, 0.9])}, name="box_b"),
            Primitive("sphere", {"center": np.array([0.3, 0.8, 2.0]) + j() * [1, 0, 1], "radius": 0.8}, name="ball"),
        ]
        cam = CameraPath(eye_points=np.array([[-2.5, 2.6, -3.5], [-1.0, 2.4, -3.8], [1.0, 2.2, -3.8], [2.5, 2.0, -3.5]]) + j(0.2, (4, 3)),
                         target=(0.0, 0.8, 3.0), focal_factor=0.9)

    elif preset == "rigid_orbit":
        orbit_box = _orbit([0.0, 0.6, 3.0] + j(), 1.5, phase=rng.uniform(0, 2 * np.pi))
        orbit_ball = _orbit([0.5, 1.4, 4.0] + j(), 1.0, phase=rng.uniform(0, 2 * np.pi), height=0.4, turns=-1.0)
        prims += [
            Primitive("box", {"center": np.array([-3.0, 0.6, 5.5]), "half_extents": np.array([0.6, 0.6, 0.6])},
                      name="static_box"),
            Primitive("box", {"center": np.zeros(3), "half_extents": np.array([0.6, 0.5, 0.4])},
                      motion=Motion(orbit_box, axis=(0, 1, 0), angle_rate=np.pi), segment_id=1,
                      is_static=False, name="orbiting_box"),
            Primitive("sphere", {"center": np.zeros(3), "radius": 0.55},
                      motion=Motion(orbit_ball, axis=(1, 1, 0), angle_rate=2.0), segment_id=2,
                      is_static=False, name="orbiting_ball"),
        ]
        cam = CameraPath(eye_points=_line([-1.0, 2.5, -3.5], [1.0, 2.3, -3.6]) + j(0.2, (4, 3)),
                         target=(0.0, 0.8, 3.5), focal_factor=0.9)

    elif preset == "pulsing_sphere":
        path = _line([-1.5, 1.4, 3.0], [1.5, 1.4, 3.0]) + j()
        prims += [
            Primitive("sphere", {"center": np.zeros(3), "radius": 1.0}, motion=Motion(path),
                      pulse_amplitude=0.3, pulse_frequency=1.0, segment_id=1, is_static=False, name="pulsing_ball"),
        ]
        cam = CameraPath(eye_points=np.array([0.0, 2.4, -3.5]) + j(), target=(0.0, 1.0, 3.0), focal_factor=0.9)

    elif preset == "two_body_occlusion":
        prims += [
            Primitive("sphere", {"center": np.zeros(3), "radius": 0.7},
                      motion=Motion(_line([-2.5, 1.0, 1.8], [2.5, 1.0, 1.8]) + j()), segment_id=1,
                      is_static=False, name="front_ball"),
            Primitive("box", {"center": np.zeros(3), "half_extents": np.array([0.8, 0.8, 0.8])},
                      motion=Motion(_line([2.5, 0.8, 4.5], [-2.5, 0.8, 4.5]) + j(), axis=(0, 1, 0), angle_rate=0.5),
                      segment_id=2, is_static=False, name="back_box"),
        ]
        cam = CameraPath(eye_points=np.array([0.0, 2.0, -3.5]) + j(), target=(0.0, 1.0, 3.0), focal_factor=0.9)

    else:  # mixed
        carrier = _line([-1.0, 0.5, 3.5], [1.2, 0.5, 3.0]) + j()
        slide = _line([1.8, 1.6, 5.0], [-1.8, 1.3, 5.5]) + j()
        prims += [
            Primitive("box", {"center": np.array([-2.8, 0.6, 5.0]) + j() * [1, 0, 1],
                              "half_extents": np.array([0.6, 0.6, 0.6])}, name="static_box"),
            Primitive("box", {"center": np.zeros(3), "half_extents": np.array([0.6, 0.5, 0.5])},
                      motion=Motion(carrier, axis=(0, 1, 0), angle_rate=0.4), segment_id=1,
                      is_static=False, name="tracked_box"),
            Primitive("sphere", {"center": np.zeros(3), "radius": 0.8}, motion=Motion(slide),
                      pulse_amplitude=0.25, pulse_frequency=1.0, segment_id=2, is_static=False, name="pulsing_ball"),
        ]
        tracked = len(prims) - 2
        start = carrier[0]
        cam = CameraPath(eye_points=np.array([start[0] - 0.5, 2.2, start[2] - 5.5]),
                         target=tuple(start + np.array([0.0, 0.3, 0.0])), focal_factor=0.8, follow=tracked)

    return Scene(prims, cam, preset=preset, seed=int(seed))
