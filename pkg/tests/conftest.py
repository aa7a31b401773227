import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_scene(rng, n_mics=6, spread=2.0):
    """Random microphone set plus a source, both in a cube around the origin."""
    mics = rng.uniform(-spread, spread, (3, n_mics))
    src = rng.uniform(-spread, spread, 3)
    return mics, src


def scene_tdoas(mics, src, nu=343.0):
    d = np.linalg.norm(mics - src[:, None], axis=0)
    return (d[1:] - d[0]) / nu
