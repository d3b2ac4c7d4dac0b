import numpy as np
import pytest

from rctgen._backend import ckernels, pykernels

ACCEPTANCE_RESULTS = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


BACKENDS = [pytest.param(pykernels, id="python")]
if ckernels is not None:
    BACKENDS.append(pytest.param(ckernels, id="cython"))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(line)
