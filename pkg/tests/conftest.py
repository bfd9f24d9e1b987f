import numpy as np
import pytest

from equicheck import build_so3_grid, extend_to_o3


@pytest.fixture(scope="session")
def grid1():
    """Tiny parity-covering grid (48 nodes) for |grid|^2 oracle comparisons."""
    return extend_to_o3(build_so3_grid(1))


@pytest.fixture(scope="session")
def grid2():
    """Parity-covering grid exact through lambda = 2 (small, for probe-heavy tests)."""
    return extend_to_o3(build_so3_grid(2))


@pytest.fixture(scope="session")
def grid4():
    return extend_to_o3(build_so3_grid(4))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get(
        "tests.test_acceptance"
    )
    if mod is None:
        return
    CRITERION_LINES = mod.CRITERION_LINES
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(
            CRITERION_LINES, key=lambda s: int(s.split()[2].rstrip(":"))
        ):
            terminalreporter.write_line(line)
