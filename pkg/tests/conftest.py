import numpy as np
import pytest

from posecal.synth import build_body


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def body():
    return build_body()


@pytest.fixture(scope="session")
def small_body():
    """50-vertex body on the h36m17 skeleton, small enough for finite differences."""
    return build_body(num_vertices=50, ring_size=4)


def pytest_terminal_summary(terminalreporter):
    from .helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
