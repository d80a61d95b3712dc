import numpy as np
import pytest

from fopkit.synthgen import SynthConfig, generate


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_corpus():
    return generate(SynthConfig(n_identities=24, samples_per_identity=4, face_dim=12, voice_dim=10,
                                latent_dim=6, seed=3))
