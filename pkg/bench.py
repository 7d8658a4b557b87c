__all__ = [
    "BENCH_COLUMNS",
    "bench_setup",
    "bench_act",
]

# Standard Library
import logging
import statistics
import time

# Dependencies
import numpy as np
from tqdm import tqdm

# Internal
from semiring import SemiringTable
from matrix_semiring import MatrixSR
from circulant import circ_act, circ_random
from paramgen import build_commuting_vector


log = logging.getLogger(__name__)

BENCH_COLUMNS = ["n", "dim", "bound", "op", "median_ns", "iters"]


def _median_ns(fn, runs: int) -> int:
    samples = []
    for _ in range(runs):
        start = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - start)
    return int(statistics.median(samples))


def _random_matrix(table: SemiringTable, dim: int, rng: np.random.Generator) -> MatrixSR:
    return MatrixSR(table, rng.integers(0, table.size, size=(dim, dim)))


def bench_setup(
    table: SemiringTable,
    dims: list[int],
    n: int,
    max_degree: int,
    runs: int = 9,
    seed: int | None = None,
    progress: bool = False,
) -> list[dict]:
    """Median time to build v = (p_i(M)) for each matrix size. Expected to grow like dim^3."""
    rng = np.random.default_rng(seed)
    rows = []
    for dim in tqdm(dims, desc="bench setup", disable=not progress, leave=False):
        M = _random_matrix(table, dim, rng)
        _, polynomials = build_commuting_vector(M, n, max_degree, rng)
        median = _median_ns(lambda: build_commuting_vector(M, n, max_degree, rng, polynomials=polynomials), runs)
        rows.append({"n": n, "dim": dim, "bound": 0, "op": "setup", "median_ns": median, "iters": runs})
        log.debug("setup dim=%d: %d ns", dim, median)
    return rows


def bench_act(
    table: SemiringTable,
    ns: list[int],
    dim: int,
    bound: int,
    max_degree: int = 2,
    runs: int = 9,
    seed: int | None = None,
    progress: bool = False,
) -> list[dict]:
    """Median time of one circulant action (a key derivation) for each vector length."""
    rng = np.random.default_rng(seed)
    M = _random_matrix(table, dim, rng)
    rows = []
    for n in tqdm(ns, desc="bench act", disable=not progress, leave=False):
        v, _ = build_commuting_vector(M, n, max_degree, rng)
        C = circ_random(n, bound, rng)
        median = _median_ns(lambda: circ_act(C, v), runs)
        rows.append({"n": n, "dim": dim, "bound": bound, "op": "act", "median_ns": median, "iters": runs})
        log.debug("act n=%d: %d ns", n, median)
    return rows
