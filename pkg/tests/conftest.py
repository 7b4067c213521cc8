import numpy as np
import pytest

from hdrkit.camera import gamma_crf
from hdrkit.image_io import RadianceMap
from hdrkit.pipeline import normalize_hdr
from hdrkit.synth import synth_scenes


@pytest.fixture(scope="session")
def identity_crf():
    return gamma_crf(1.0)


@pytest.fixture(scope="session")
def small_scene():
    """One normalized 48x48 blob scene."""
    scene = synth_scenes(2, 48, seed=101)[1]
    norm, _ = normalize_hdr(scene)
    return norm


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


@pytest.fixture()
def random_map(rng):
    return RadianceMap.from_array(rng.random((12, 10, 3)).astype(np.float32) * 3.0)
