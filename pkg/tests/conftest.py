import re

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        def key(line):
            num, suffix = re.match(r"CRITERION (\d+)(\w*)", line).groups()
            return int(num), suffix

        for line in sorted(ACCEPTANCE_LINES, key=key):
            terminalreporter.write_line(line)
