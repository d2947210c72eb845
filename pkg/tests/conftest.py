import numpy as np
import pytest
from hypothesis import settings

from maglab.geometry import SurfaceModel

settings.register_profile("maglab", deadline=None, derandomize=True)
settings.load_profile("maglab")

# acceptance outcomes, filled in by test_acceptance.py and printed at the end of the run
ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def constant_model():
    return SurfaceModel.constant()


@pytest.fixture(scope="session")
def perturbed_model():
    return SurfaceModel.perturbed()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
