"""
Shared fixtures for the solver test suites
"""
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from services.Geometry.geometry import DomainSpec
from services.SpectralCore.spectral_core import Grid

# Spectral work per example is heavier than hypothesis expects
settings.register_profile(
    "sfe",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("ci", parent=settings.get_profile("sfe"), max_examples=100)
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "sfe"))


@pytest.fixture
def rng():
    return np.random.default_rng(20200101)


@pytest.fixture
def grid_1d():
    return Grid(1, 32)


@pytest.fixture
def grid_2d():
    return Grid(2, 32)


@pytest.fixture
def interval():
    return DomainSpec.interval(2.0, 5.0).build()


@pytest.fixture
def disc():
    return DomainSpec.disc_complement((2.0, 3.0), 1.0).build()


@pytest.fixture
def eye():
    return DomainSpec.eye((3.0, 3.0), 3.0, 3.0 * np.pi / 4.0).build()


@pytest.fixture
def diamond():
    return DomainSpec.diamond((3.0, 3.5), 3.0).build()


def random_real_field(rng, grid: Grid, bandwidth: int = None) -> np.ndarray:
    """Real samples of a random trigonometric polynomial resolved on grid"""
    values = rng.standard_normal(grid.shape)
    if bandwidth is None:
        return values
    coefficients = np.fft.fftn(values)
    keep = np.max(np.abs(np.stack(grid.wave_mesh)), axis=0) <= bandwidth
    return np.real(np.fft.ifftn(np.where(keep, coefficients, 0.0)))
