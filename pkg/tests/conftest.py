import numpy as np
import pytest

from raw2raw import synthcam


@pytest.fixture(scope="session")
def grid():
    return synthcam.default_grid()


@pytest.fixture(scope="session")
def sensor_a(grid):
    return synthcam.gaussian_sensor("camA")


@pytest.fixture(scope="session")
def sensor_b(grid):
    return synthcam.gaussian_sensor("camB", peaks=(615.0, 525.0, 445.0),
                                    widths=(30.0, 30.0, 30.0))


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory, sensor_a, sensor_b):
    """Small shared synthetic dataset: 3 unpaired scenes per camera,
    2 anchors, 2 tests, 32x32 images."""
    root = tmp_path_factory.mktemp("tinyset")
    manifest = synthcam.make_paired_dataset(
        3, sensor_a, sensor_b, seed=5, out_dir=root, image_size=(32, 32),
        n_anchor=2, n_test=2, exposure_percentile=100.0)
    return root, manifest


def rand_packed(rng, h=8, w=8, channels=3, camera_id="cam"):
    from raw2raw.rawio import PackedImage

    return PackedImage(rng.random((h, w, channels), dtype=np.float64
                                  ).astype(np.float32), camera_id=camera_id)
