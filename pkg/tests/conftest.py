import numpy as np
import pytest

from mlsim.dynamics import ParticleKind
from mlsim.spectral import Grid, VectorField, make_charge_density

# Two scales: the desk-scale default grid for acceptance-grade checks, and a
# half-size box for cheap unit tests (same dx, so the same physics regime).


@pytest.fixture(scope="session")
def grid():
    return Grid(L=32.0, N=128)


@pytest.fixture(scope="session")
def rho(grid):
    return make_charge_density("laplacian-gaussian", 1.0, 1.0, grid)


@pytest.fixture(scope="session")
def grid_small():
    return Grid(L=16.0, N=64)


@pytest.fixture(scope="session")
def rho_small(grid_small):
    return make_charge_density("laplacian-gaussian", 1.0, 1.0, grid_small)


@pytest.fixture(scope="session")
def particle():
    return ParticleKind("nonrelativistic", m=1.0, I=1.0)


@pytest.fixture(scope="session")
def particle_rel():
    return ParticleKind("relativistic", m=1.0, I=1.0)


def random_scalar_values(grid, seed, smooth=0.5):
    """Smooth random real field (band-limited by a Gaussian envelope)."""
    rng = np.random.default_rng(seed)
    hat = grid.fft(rng.standard_normal((grid.N, grid.N)))
    hat *= np.exp(-grid.k2 * smooth**2)
    return grid.ifft(hat)


def random_vector_field(grid, seed, smooth=0.5):
    """Smooth random vector field, generally not solenoidal."""
    rng = np.random.default_rng(seed)
    hat = grid.fft(rng.standard_normal((2, grid.N, grid.N)))
    hat *= np.exp(-grid.k2 * smooth**2)
    return VectorField(grid, hat=hat)
