import numpy as np
import pytest

from smoothfem import analysis, assembly
from smoothfem.elements import dmatrix


@pytest.fixture(scope="session")
def material():
    return dmatrix(1.0e3, 0.2)


@pytest.fixture(scope="session")
def block():
    return assembly.block_problem()


@pytest.fixture(scope="session")
def reference(block):
    """The default-geometry fine reference; shared across the session."""
    return analysis.solve_reference(block, 64)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
