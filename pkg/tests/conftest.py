import numpy as np
import pytest

from invshuttle.protocols import SeparationSpec, run

_ACCEPTANCE = []


@pytest.fixture(scope="session")
def reference_spec():
    return SeparationSpec()


@pytest.fixture(scope="session")
def reference_result(reference_spec):
    return run(reference_spec)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_runtest_logreport(report):
    if report.when == "call":
        for key, value in report.user_properties:
            if key == "acceptance":
                _ACCEPTANCE.append(value)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
