import math
import sys

import pytest

from cubeqkd import geometry
from cubeqkd.config import MissionConfig


@pytest.fixture(scope="session")
def cfg():
    return MissionConfig()


@pytest.fixture(scope="session")
def overhead():
    return geometry.zenith_pass()


@pytest.fixture(scope="session")
def co_catalog():
    return geometry.year_catalog(geometry.circular_orbit(30.0))


@pytest.fixture(scope="session")
def sso_catalog():
    return geometry.year_catalog(geometry.sun_synchronous_orbit())


@pytest.fixture(scope="session")
def la_palma_lat():
    return math.degrees(geometry.LA_PALMA.latitude)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
