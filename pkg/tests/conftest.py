import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def urban():
    """The bundled urban preset rendered once: (scene, cloud, image, config)."""
    from edgecal import synth

    scene = synth.load_preset("urban")
    return scene, synth.render_lidar(scene), synth.render_camera(scene), synth.config_for_scene(scene)


@pytest.fixture(scope="session")
def urban_features(urban):
    from edgecal.pipeline import extract_features

    scene, cloud, image, cfg = urban
    return extract_features(cloud, image, scene.camera, scene.theta, cfg, keep_intermediates=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
