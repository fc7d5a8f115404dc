import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "gefzeros", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("gefzeros")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))


# PASS/FAIL lines of the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
