import numpy as np
import pytest

from maskpipe import bind, build_mobilenetv2, random_archive

from support import forced_archive


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240814)


@pytest.fixture(scope="session")
def bound_model():
    """A full two-class model with deterministic random weights."""
    return bind(build_mobilenetv2(), random_archive(seed=11))


@pytest.fixture(scope="session")
def nomask_model():
    """A model that always prefers the no-mask class."""
    return bind(build_mobilenetv2(), forced_archive([0.0, 5.0]))


@pytest.fixture(scope="session")
def mask_model():
    """A model that always prefers the mask class."""
    return bind(build_mobilenetv2(), forced_archive([5.0, 0.0]))
