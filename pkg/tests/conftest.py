import pytest

from dcnls.grid import build_grid
from dcnls.groundstate import solve_Q_mu, solve_classical_Q


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RECORD
    except ImportError:
        return
    if RECORD:
        terminalreporter.section("acceptance criteria")
        for line in RECORD:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid_std():
    """Shared working grid for the heavier spectral and acceptance checks."""
    return build_grid(1536, 40.0, "tanh")


@pytest.fixture(scope="session")
def gs_std(grid_std):
    return solve_classical_Q(grid_std)


@pytest.fixture(scope="session")
def gs_std_mu02(grid_std):
    return solve_Q_mu(0.02, grid_std)


@pytest.fixture(scope="session")
def gs_std_mu05(grid_std):
    return solve_Q_mu(0.05, grid_std)
