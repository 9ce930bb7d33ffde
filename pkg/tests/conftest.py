import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("polaris", deadline=None, max_examples=60)
settings.load_profile("polaris")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
