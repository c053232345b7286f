import numpy as np
import pytest


@pytest.fixture
def gen():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
