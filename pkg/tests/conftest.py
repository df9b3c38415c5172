import numpy as np
import pytest

from oodtune.datasets import gen_moons
from oodtune.model import Discriminator
from oodtune.training import pretrain


@pytest.fixture(scope="session")
def moons_setup():
    """A small moons dataset and a classifier pretrained on it."""
    ds = gen_moons(600, 0.1, np.random.default_rng(100))
    model = Discriminator([2, 64, 64, 2], np.random.default_rng(101))
    pretrain(model, ds, epochs=30, rng=np.random.default_rng(102), batch_size=64)
    return model, ds
