import numpy as np
import pytest

from nanoring.fiber_modes import DispersionCache, FiberSpec, list_guided_modes, wavenumber


@pytest.fixture(scope="session")
def fiber():
    return FiberSpec(1.45)


@pytest.fixture(scope="session")
def cache():
    return DispersionCache()


@pytest.fixture(scope="session")
def k0_34():
    return wavenumber(3.4)


@pytest.fixture(scope="session")
def k0_18():
    return wavenumber(1.8)


@pytest.fixture(scope="session")
def modes_34(fiber, k0_34, cache):
    return list_guided_modes(fiber, k0_34, cache=cache)


@pytest.fixture(scope="session")
def modes_18(fiber, k0_18, cache):
    return list_guided_modes(fiber, k0_18, cache=cache)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance lines, printed together at the end of the session
_ACCEPTANCE: list = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line: acceptance(criterion, ok, detail)."""

    def record(criterion, ok, detail):
        line = f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} ({detail})"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
