import numpy as np
import pytest

from pushsum_sgp import _kernels

BACKENDS = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])

# 4-node example with uniform out-weights: column i is sender i.
EXAMPLE_P = np.array([
    [1 / 2, 0, 0, 1 / 3],
    [1 / 2, 1 / 2, 0, 1 / 3],
    [0, 1 / 2, 1 / 2, 0],
    [0, 0, 1 / 2, 1 / 3],
])


@pytest.fixture(params=BACKENDS)
def backend(request):
    before = _kernels.backend()
    _kernels.use_numba(request.param == "numba")
    yield request.param
    _kernels.use_numba(before == "numba")


@pytest.fixture
def example_p():
    return EXAMPLE_P.copy()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
