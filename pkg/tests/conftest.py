import warnings

import pytest
from hypothesis import settings

from fso_irs_lab.geometry import BeamParams, LensConfig, LinkGeometry

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def geometry():
    """Reference placement: L_tr = 800 m, d3 = 1000 m, x = 200 m."""
    return LinkGeometry.reference()


@pytest.fixture
def beam():
    return BeamParams()


@pytest.fixture
def lens():
    return LensConfig()


@pytest.fixture
def quiet():
    """Silence validity warnings from deliberate out-of-regime evaluations."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)
