import numpy as np
import pytest

from fields import Grid2D, ScalarField


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: estudios de refinamiento (excluir con -m 'not slow')")


@pytest.fixture
def grid17():
    return Grid2D(17, 1.0, 1.0)


@pytest.fixture
def grid33():
    return Grid2D(33, 1.0, 1.0)


@pytest.fixture
def grid65():
    return Grid2D(65, 1.0, 1.0)


@pytest.fixture
def make_field():
    """Muestrea una función f(x1, x2) sobre una grilla."""
    def _make(grid, func):
        x1, x2 = grid.mesh
        return ScalarField(grid, np.broadcast_to(func(x1, x2), x1.shape))
    return _make


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(key=1234))
