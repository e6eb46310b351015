import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hybridarm.model import planar_arm, ur5_default  # noqa: E402


@pytest.fixture(scope="session")
def ur5():
    return ur5_default()


@pytest.fixture(scope="session")
def pendulum():
    """One horizontal-axis link: m = 2, l_c = 0.3, I_zz about CoM = 0.05, g along -y."""
    return planar_arm([2.0], [0.6], com_fractions=[0.5], izz=[0.05])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from _report import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
