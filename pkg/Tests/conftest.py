import os
import sys

import numpy as np
import pytest

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from data.volume import DwiVolume, ScalarMap  # noqa: E402
from geometry.sphere import Sphere  # noqa: E402
from model.tracto_transformer import ModelConfig  # noqa: E402

TESTS_CONFIG = os.path.join(ROOT, "Tests", "tests_config.yaml")

AXES6 = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=np.float64)


@pytest.fixture
def axis_sphere():
    """+x, -x, +y, -y, +z, -z."""
    return Sphere.from_directions(AXES6)


@pytest.fixture
def tiny_model_config():
    return ModelConfig(k=6, d_model=8, n_layers=1, n_heads=2, d_ffn=16, dropout_p=0.0,
                       g_in=4, use_cnn3d=True, max_len=12, seed=3)


@pytest.fixture
def toy_model_config():
    return ModelConfig(k=20, d_model=64, n_layers=2, n_heads=4, d_ffn=128, dropout_p=0.1,
                       g_in=5, use_cnn3d=True, max_len=30, seed=0)


@pytest.fixture
def identity_affine():
    return np.eye(4)


@pytest.fixture
def small_volume(identity_affine):
    """10^3 grid with 4 random positive channels."""
    rng = np.random.default_rng(11)
    return DwiVolume(data=rng.uniform(0.5, 1.5, size=(10, 10, 10, 4)), affine=identity_affine)


@pytest.fixture
def full_mask(identity_affine):
    return ScalarMap(data=np.ones((10, 10, 10), dtype=np.uint8), affine=identity_affine,
                     kind="white-matter-mask")


@pytest.fixture
def constant_fa(identity_affine):
    return ScalarMap(data=np.full((10, 10, 10), 0.5, dtype=np.float32), affine=identity_affine, kind="FA")
