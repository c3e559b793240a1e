import pytest

from bilateral_exact.enumerate import Design, build_classed_space
from bilateral_exact.model import Dataset

# Otitis media example: (m0, m1, m2, n0, n1) per antibiotic group
EXAMPLE_A_ROWS = [(0, 1, 3, 8, 11), (1, 0, 6, 7, 11)]
# Retinopathy of prematurity example: zone 1 and zone 2
EXAMPLE_B_ROWS = [(4, 1, 1, 1, 1), (1, 2, 4, 3, 3)]


@pytest.fixture(scope="session")
def example_a():
    return Dataset(EXAMPLE_A_ROWS)


@pytest.fixture(scope="session")
def example_b():
    return Dataset(EXAMPLE_B_ROWS)


@pytest.fixture(scope="session")
def space_a(example_a):
    return build_classed_space(Design.of(example_a))


@pytest.fixture(scope="session")
def space_b(example_b):
    return build_classed_space(Design.of(example_b))
