import numpy as np
import pytest

from hydroswarm import (
    ConfinementSpec,
    ConvolutionPlan,
    Grid,
    KernelSpec,
    ScalarField,
    State,
    VectorField,
)


def gaussian_state(grid, width=0.5, mass=1.0, center=None, velocity=None):
    """Normalized Gaussian blob with optional uniform velocity."""
    x = grid.centers()
    if center is None:
        center = np.zeros(grid.d)
    r2 = sum((x[k] - center[k]) ** 2 for k in range(grid.d))
    rho = np.exp(-r2 / (2.0 * width**2))
    rho = np.where(grid.interior_mask(), rho, 0.0)
    rho *= mass / (rho.sum() * grid.cell_volume)
    mom = np.zeros((grid.d,) + grid.shape)
    if velocity is not None:
        v = np.atleast_1d(np.asarray(velocity, dtype=float))
        mom = rho[None] * v.reshape((grid.d,) + (1,) * grid.d)
    return State(0.0, ScalarField(grid, rho), VectorField(grid, mom))


@pytest.fixture
def grid1d():
    return Grid(1, (64,), (4.0,))


@pytest.fixture
def grid2d():
    return Grid(2, (24, 24), (3.0, 3.0))


@pytest.fixture
def gauss_kernel():
    return KernelSpec("gaussian-attractive")


@pytest.fixture
def quad_conf():
    return ConfinementSpec("quadratic")


def build_plan(grid, kernel=None, psi=None, method="spectral"):
    return ConvolutionPlan.build(grid, kernel, psi, method=method)
