import numpy as np
import pytest

from qptkit.process import CNOT, IDENTITY, chi_from_unitary, depolarizing_chi, random_physical_chi
from qptkit.qcore import Rng


@pytest.fixture(scope="session")
def chi_cnot():
    return chi_from_unitary(CNOT)


@pytest.fixture(scope="session")
def chi_identity():
    return chi_from_unitary(IDENTITY)


@pytest.fixture(scope="session")
def chi_depolarizing():
    return depolarizing_chi()


@pytest.fixture(scope="session")
def random_chis():
    """Twenty random CPTP maps of assorted Kraus rank."""
    rng = Rng(2024)
    return [random_physical_chi(rng.substream(i)) for i in range(20)]


def bell_phi_plus():
    return np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
