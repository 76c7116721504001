"""
Shared fixtures for the FEENet test suite.
Meshes and bases are session-scoped; they are immutable and cached by identity.
"""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.append(str(Path(__file__).parent.parent))

from src.fem.assembly import fem_operators
from src.geometry.mesh import generate_unit_square
from src.spectral.eigen import eigenbasis_for_mesh
from src.utils.logger import configure_logging


@pytest.fixture(scope="session", autouse=True)
def quiet_logging():
    """Console logging at WARNING, no file sink."""
    configure_logging("WARNING", None)


@pytest.fixture(scope="session")
def tiny_square():
    """8 x 8 nodes: 36 interior DOFs, small enough for the full spectrum."""
    return generate_unit_square(8)


@pytest.fixture(scope="session")
def small_square():
    return generate_unit_square(9)


@pytest.fixture(scope="session")
def small_ops(small_square):
    return fem_operators(small_square)


@pytest.fixture(scope="session")
def small_basis(small_square):
    return eigenbasis_for_mesh(small_square, 12)


@pytest.fixture(scope="session")
def full_basis(tiny_square):
    return eigenbasis_for_mesh(tiny_square, fem_operators(tiny_square).dofs.n_interior)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def sine_mode(mesh, m: int = 1, n: int = 1) -> np.ndarray:
    """Nodal interpolant of sin(m pi x) sin(n pi y)."""
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    return np.sin(m * np.pi * x) * np.sin(n * np.pi * y)
