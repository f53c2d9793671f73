import numpy as np
import pytest

ACCEPTANCE_RESULTS = {}

from ratealloc.region import GaussianMacRegion, PolytopeRegion, discretize

MAC_LEVELS = [[0.0, 0.4, 1.0], [0.0, 0.4, 1.0]]
MAC_VECTORS = {(0, 0), (0, 0.4), (0, 1), (0.4, 0), (0.4, 0.4), (0.4, 1), (1, 0), (1, 0.4)}


@pytest.fixture(scope="session")
def mac_grid():
    return discretize(GaussianMacRegion(3, 1), levels_override=MAC_LEVELS)


@pytest.fixture(scope="session")
def simplex_grid():
    return discretize(PolytopeRegion([[1.0, 1.0]], [1.0]), epsilon=0.5)


def random_polytope(rng, n=2, rows=3):
    A = rng.uniform(0.1, 1.0, size=(rows, n))
    b = rng.uniform(0.5, 2.0, size=rows)
    return PolytopeRegion(A, b)


def state_of(grid, vec):
    return grid.space.index_of_vector(np.asarray(vec, dtype=float))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(ACCEPTANCE_RESULTS[k])
