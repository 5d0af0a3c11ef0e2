import numpy as np
import pytest

from helpers import two_label_sphere


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def sphere_mesh():
    return two_label_sphere(2)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
