import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from klidsvm.data import generate_synthetic  # noqa: E402
from klidsvm.svm import SvmConfig  # noqa: E402

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def blobs():
    """Two overlapping Gaussian classes, 120 points."""
    return generate_synthetic("two-gaussians", n=120, noise=0.8, seed=3)


@pytest.fixture
def separated():
    return generate_synthetic("two-gaussians", n=80, noise=0.3, seed=5)


@pytest.fixture
def toy_cfg():
    return SvmConfig.make(1.0, 0.5)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


@pytest.fixture
def criterion():
    def record(key, passed, detail):
        ACCEPTANCE_LINES[key] = f"criterion {key:<4} {'PASS' if passed else 'FAIL'}  {detail}"
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int("".join(filter(str.isdigit, k))), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
