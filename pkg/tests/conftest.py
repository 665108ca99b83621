"""
Shared fixtures: a tiny room, its rendered views, tiny settings and a tiny field.
"""

import numpy as np
import pytest

from src.field.mlp import FieldMLP
from src.nerf.trainer import scene_bounds
from src.scene.geometry import generate_scene
from src.scene.render import render_dataset
from tests.test_helpers import tiny_settings


@pytest.fixture
def settings():
    return tiny_settings()


@pytest.fixture(scope="session")
def tiny_dataset():
    """Two objects in the default room, four 16x12 training views and two test views."""
    config = tiny_settings().scene
    scene = generate_scene(config.seed, config)
    return render_dataset(scene, config)


@pytest.fixture
def tiny_field(settings):
    bounds = scene_bounds(settings.scene.room_size)
    return FieldMLP(settings.radiance, bounds, num_images=settings.scene.num_train_views, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
