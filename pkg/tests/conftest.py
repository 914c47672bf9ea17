import numpy as np
import pytest


def random_spd(rng, n, shift=None):
    """Well-conditioned random SPD matrix."""
    b = rng.standard_normal((n, n))
    return b @ b.T + (n if shift is None else shift) * np.eye(n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240831)
