import numpy as np
import pytest

from trajfield.synth import build_scene, generate_bundle


@pytest.fixture(scope="session")
def bundle_cache():
    """Small synthetic bundles, generated once per session."""
    cache = {}

    def get(preset, N=4, size=16, seed=0):
        key = (preset, N, size, seed)
        if key not in cache:
            cache[key] = generate_bundle(build_scene(preset, seed), N, size, size)
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
