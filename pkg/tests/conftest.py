import numpy as np
import pytest

from pointforge import backend

ACCEPTANCE_RESULTS = []


def record_criterion(number: int, passed: bool, detail: str):
    ACCEPTANCE_RESULTS.append((number, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {status} - {detail}")


def _available_backends():
    names = ["numpy"]
    if backend.numba_available():
        names.append("numba")
    return names


@pytest.fixture(params=_available_backends())
def kernel_backend(request):
    """Run a test under each available kernel backend."""
    previous = backend.active_backend()
    backend.use_backend(request.param)
    yield request.param
    backend.use_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
