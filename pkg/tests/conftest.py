from __future__ import annotations

import numpy as np
import pytest

from backend.collision import build_operator
from backend.equilibria import build_equilibrium
from models import CollisionSpec


@pytest.fixture(scope="session")
def eq_half():
    """alpha = 0.5 on a grid that resolves moments up to order 6."""
    return build_equilibrium(0.5, 1, k_max=6.0, n=161)


@pytest.fixture(scope="session")
def eq_wide():
    """alpha = 0.5 resolving moments up to order 9 (splitting with k2 = k + 2 ell + 2)."""
    return build_equilibrium(0.5, 1, k_max=9.0, n=201)


@pytest.fixture(scope="session")
def eq_gauss():
    return build_equilibrium(2.0, 1, k_max=6.0, n=121)


@pytest.fixture(scope="session")
def fp_half(eq_half):
    return build_operator(CollisionSpec(kind="fokker_planck", beta=1.0), eq_half)


@pytest.fixture(scope="session")
def separable_half(eq_half):
    return build_operator(CollisionSpec(kind="scattering", beta=1.0, kernel_family="separable"), eq_half)


@pytest.fixture(scope="session")
def boltzmann_half(eq_half):
    spec = CollisionSpec(kind="scattering", beta=0.5, gamma=0.5, kernel_family="boltzmann")
    return build_operator(spec, eq_half)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
