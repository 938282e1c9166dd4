"""Shared, session-scoped meshes and bases (built once, read-only)."""
import pytest

from surfinv.arakelov import green_matrix, green_system
from surfinv.hodge import compute_bases
from surfinv.surface import build_flat_torus, build_hyperelliptic_cover

G2_BRANCH = [-2, -1, 0, 1, 2, 5]
G3_BRANCH = [-3, -2, -1, 0, 1, 2, 4, 6]

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def torus():
    return build_flat_torus(0.5 + 0.8j, 16)


@pytest.fixture(scope="session")
def torus_bases(torus):
    return compute_bases(torus)


@pytest.fixture(scope="session")
def g2_mesh():
    return build_hyperelliptic_cover(G2_BRANCH, 12)


@pytest.fixture(scope="session")
def g2_bases(g2_mesh):
    return compute_bases(g2_mesh)


@pytest.fixture(scope="session")
def g2_system(g2_bases):
    return green_system(g2_bases)


@pytest.fixture(scope="session")
def g2_greens(g2_system):
    return green_matrix(g2_system)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
