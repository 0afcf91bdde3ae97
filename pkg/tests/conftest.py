import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from centrimag_coil import CoilGeometry  # noqa: E402
from centrimag_constants import MolecularConstants  # noqa: E402
from centrimag_dynamics import GasConditions  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte-Carlo and end-to-end checks")


@pytest.fixture(scope="session")
def oxygen() -> MolecularConstants:
    return MolecularConstants.oxygen()


@pytest.fixture(scope="session")
def transverse_coil() -> CoilGeometry:
    return CoilGeometry.transverse_default()


@pytest.fixture(scope="session")
def longitudinal_coil() -> CoilGeometry:
    return CoilGeometry.longitudinal_default()


@pytest.fixture
def half_bar() -> GasConditions:
    return GasConditions.from_bar(0.5, 295.0)


@pytest.fixture
def ns_grid() -> np.ndarray:
    """-2 ns .. 10 ns in 2 ps steps, 6001 samples."""
    return -2.0e-9 + 2.0e-12 * np.arange(6001)
