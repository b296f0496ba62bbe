import numpy as np
import pytest
from hypothesis import settings

from mfteam.model import ModelSpec
from mfteam.zoo import identity_model, random_model

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def affine_model(A0_row, B_rows, c0=0.0, c1=None, nx=2, nu=1, T=1, z1=None):
    """Time- and action-invariant affine model with a common kernel row."""
    A0 = np.broadcast_to(np.asarray(A0_row, float), (T, nx, nu, nx)).copy()
    B = np.broadcast_to(np.asarray(B_rows, float), (T, nx, nu, nx, nx)).copy()
    c0 = np.broadcast_to(np.asarray(c0, float), (T, nx, nu)).copy()
    c1 = np.zeros((T, nx, nu, nx)) if c1 is None else np.broadcast_to(
        np.asarray(c1, float), (T, nx, nu, nx)).copy()
    z1 = np.full(nx, 1.0 / nx) if z1 is None else z1
    return ModelSpec(z1, A0, B, c0, c1)


@pytest.fixture
def two_state():
    return random_model(2, 2, 2, seed=2)


@pytest.fixture
def ident():
    return identity_model(2, 2)
