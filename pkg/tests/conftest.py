import numpy as np
import pytest

from vcstream import rng as crng
from vcstream.config import toy_config, with_fine_tuning
from vcstream.container import init_random


@pytest.fixture(scope="session")
def toy_container():
    """Random toy-size weights, pre-fine-tuning layout (excitation decoder
    present)."""
    return init_random(toy_config(), seed=1)


@pytest.fixture(scope="session")
def toy_container_ft():
    """Fine-tuned layout: no excitation decoder."""
    return init_random(with_fine_tuning(toy_config(), True), seed=1)


@pytest.fixture(scope="session")
def toy_mel():
    """A short deterministic log-mel track shaped like real features."""
    cfg = toy_config()
    key = crng.derive_key(crng.root_key(99), crng.SITE_BENCH_INPUT)
    u = crng.uniforms(key, 0, 24 * cfg.audio.n_mels)
    return (u.reshape(24, cfg.audio.n_mels) * 4.0 - 6.0)
