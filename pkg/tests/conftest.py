import numpy as np
import pytest
from hypothesis import settings

from vardiff_lab.models import LagrangianModel, PolynomialPotential

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def hyperbolic():
    return LagrangianModel("scalar-hyperbolic", PolynomialPotential((0.0, 0.0, -0.5)))


@pytest.fixture
def elliptic():
    return LagrangianModel("scalar-elliptic", PolynomialPotential((0.0,)))


@pytest.fixture
def rng():
    return np.random.default_rng(0)
