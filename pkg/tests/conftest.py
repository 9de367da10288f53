import pytest

from predprey import AgeGrid, build_kernels, build_setup

U_STAR = 0.15


def make_setup(n_cells: int):
    grid = AgeGrid(A=1.0, n_cells=n_cells)
    kernels = build_kernels(0.5, 3.0, 0.4, 0.5, 3.0, 0.4, grid)
    return build_setup(kernels, U_STAR)


@pytest.fixture(scope="session")
def setup400():
    return make_setup(400)


@pytest.fixture(scope="session")
def setup200():
    return make_setup(200)


@pytest.fixture(scope="session")
def setup100():
    return make_setup(100)


@pytest.fixture(scope="session")
def eq400(setup400):
    return setup400.eq
