# Dependencies
import numpy as np
import pytest

# Internal
from settings import dir_path
from semiring import SemiringTable, load_table_file
from matrix_semiring import MatrixSR, parse_matrix
from paramgen import Partition, base_block_matrix, generate_params


VAULT = dir_path / "sr_vault"


@pytest.fixture(scope="session")
def maze20() -> SemiringTable:
    return load_table_file(VAULT / "maze20.tbl")


@pytest.fixture(scope="session")
def boolean() -> SemiringTable:
    return load_table_file(VAULT / "boolean.tbl")


@pytest.fixture(scope="session")
def boolean_sq() -> SemiringTable:
    return load_table_file(VAULT / "boolean_sq.tbl")


@pytest.fixture(scope="session")
def f3() -> SemiringTable:
    return load_table_file(VAULT / "f3.tbl")


@pytest.fixture(scope="session")
def zero_ring3() -> SemiringTable:
    return load_table_file(VAULT / "zero_ring3.tbl")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240917)


@pytest.fixture(scope="session")
def small_params(maze20):
    """dim 5 (partition [2,3]), n = 2, private entries up to 8."""
    params, _ = generate_params(maze20, total=5, n=2, max_degree=2, entry_bound=8, seed=11)
    return params


def cycle(table: SemiringTable, a: int) -> MatrixSR:
    """The a-cycle permutation matrix, which has exactly a distinct powers."""
    return base_block_matrix(Partition((a,)), table)


def mat(table: SemiringTable, text: str) -> MatrixSR:
    return parse_matrix(text, table)


def random_matrix(table: SemiringTable, dim: int, rng: np.random.Generator) -> MatrixSR:
    return MatrixSR(table, rng.integers(0, table.size, size=(dim, dim)))
