import numpy as np
import pytest

from taufix import fock
from taufix.seminorm import Panel


def random_op(rng, D, scale=1.0):
    return scale * (rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def H64():
    return fock.shifted_hamiltonian(64, 4)


@pytest.fixture(scope="session")
def panel64(H64):
    return Panel.default(H64)


@pytest.fixture(scope="session")
def cutoff_run():
    """Default free-boson cutoff removal: D=64, L in {8, 16, 32, 48}, probe a + a^dagger."""
    from taufix.dynamics import free_boson_model, remove_cutoff
    from taufix.picard import TimeGrid

    model = free_boson_model(64, (8, 16, 32, 48))
    a, ad = fock.ladder_ops(64)
    panel = Panel.default(model.H, rates=(1.0, 2.0))
    grid = TimeGrid(1.0, 51)
    return model, panel, grid, remove_cutoff(model, a + ad, grid, panel, tol=1e-10)
