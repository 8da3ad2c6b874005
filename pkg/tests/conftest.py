import pytest

from hypsoliton import ModelParams, RadialGrid, default_r_max, gradient_flow_minimize

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def soliton_3d():
    """d=3, p=2, lambda=1 ground state on a fine grid."""
    params = ModelParams(3, 2.0, 1.0)
    grid = RadialGrid.with_spacing(default_r_max(params.mu), 1e-3)
    return gradient_flow_minimize(params, grid=grid)


@pytest.fixture(scope="session")
def soliton_2d():
    """d=2, p=1, lambda=1 ground state on a moderate grid."""
    params = ModelParams(2, 1.0, 1.0)
    grid = RadialGrid.with_spacing(default_r_max(params.mu), 5e-3)
    return gradient_flow_minimize(params, grid=grid)
