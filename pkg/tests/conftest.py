import numpy as np
import pytest

from hardyspace.grid import GridSpec
from hardyspace.operator import build_operator


@pytest.fixture(scope="session")
def grid128():
    return GridSpec(1, 128)


@pytest.fixture(scope="session")
def lap128(grid128):
    return build_operator("laplacian", grid128)


@pytest.fixture(scope="session")
def grid64():
    return GridSpec(1, 64)


@pytest.fixture(scope="session")
def lap64(grid64):
    return build_operator("laplacian", grid64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """``acceptance(number, ok, detail)`` records one criterion outcome."""
    def record(number, ok, detail):
        _ACCEPTANCE[number] = (bool(ok), detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
