import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from canls.signal_model import build_steering_matrix, reference_geometry

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.differing_executors])
settings.load_profile("default")


@pytest.fixture(scope="session")
def geo():
    return reference_geometry()


@pytest.fixture(scope="session")
def A(geo):
    return build_steering_matrix(geo)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def cnoise(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES):
            terminalreporter.write_line(line)
