import functools

import numpy as np
import pytest

from sammd.experiments import BlobAttackScenario


@functools.lru_cache(maxsize=16)
def _scenario(seed: int) -> BlobAttackScenario:
    return BlobAttackScenario(seed=seed)


@pytest.fixture(scope="session")
def scenario_factory():
    """Cached attack scenarios keyed by seed (classifier training is costly)."""
    return _scenario


@pytest.fixture(scope="session")
def scenario0():
    return _scenario(0)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
