# Standard Library
import json
import math
import struct

# Dependencies
import numpy as np
import pytest
from sympy.utilities.iterables import partitions

# Internal
from conftest import mat, cycle
from circulant import CommutingVector
from semiring import SemiringTable, center, table_digest
from matrix_semiring import (
    GeneralizedPermutation, MatrixSR, identity, mat_add, mat_mul, order_profile, parse_matrix, encode_matrix,
)
from paramgen import (
    Partition, PublicParams, ParamsError, best_partition, landau_bounds, base_block_matrix, randomize_upper_blocks,
    random_generalized_permutation, build_public_matrix, evaluate_polynomial, build_commuting_vector,
    generate_params, encode_params, decode_params, params_digest, validate_provenance,
)


BASE_2_3 = """
0 1 0 0 0 0
1 0 0 0 0 0
0 0 0 1 0 0
0 0 0 0 1 0
0 0 1 0 0 0
0 0 0 0 0 1
"""


def landau_oracle(total: int) -> int:
    """Largest lcm over all partitions of every s <= total."""
    return max(math.lcm(*parts) for s in range(1, total + 1) for parts in partitions(s))


@pytest.mark.parametrize("total", range(1, 21))
def test_best_partition_matches_enumeration(total):
    p = best_partition(total)
    assert p.total == total
    assert p.lcm == landau_oracle(total)


def test_best_partition_examples():
    assert best_partition(5) == Partition((2, 3), 0)
    assert best_partition(1) == Partition((1,), 0)
    assert best_partition(20).lcm >= 280


def test_best_partition_limit():
    best_partition(64)
    with pytest.raises(ParamsError, match="total exceeds partition DP limit 64"):
        best_partition(65)


def test_landau_upper_bound_holds():
    for total in range(3, 41):
        _, upper = landau_bounds(total)
        assert math.log(best_partition(total).lcm) <= upper


def test_landau_bounds_at_twenty():
    lower, upper = landau_bounds(20)
    ln = math.log(20)
    assert upper == pytest.approx(math.sqrt(20) * ln * (1 + math.log(ln) / (2 * ln)))
    assert lower == pytest.approx(20 * ln)


def test_landau_bounds_domain():
    lower, upper = landau_bounds(3)
    assert 0 < lower and 0 < upper < math.inf
    with pytest.raises(ParamsError):
        landau_bounds(2)


def test_base_block_matrix(maze20):
    A = base_block_matrix(Partition((2, 3), 1), maze20)
    assert A == parse_matrix(BASE_2_3, maze20)
    assert base_block_matrix(Partition((1,)), maze20) == identity(maze20, 1)


def test_base_block_matrix_needs_units():
    no_one = SemiringTable(["0", "x"], [[0, 1], [1, 1]], [[0, 0], [0, 0]])
    with pytest.raises(ParamsError):
        base_block_matrix(Partition((2,)), no_one)


def test_base_matrix_period_is_lcm(maze20):
    for parts in [(2, 3), (4,), (3, 4, 5), (1, 2)]:
        profile = order_profile(base_block_matrix(Partition(parts, 1), maze20))
        assert profile.preperiod == 0
        assert profile.period == math.lcm(*parts)


def test_randomize_density_zero(maze20, rng):
    p = Partition((2, 3), 1)
    A = base_block_matrix(p, maze20)
    assert randomize_upper_blocks(A, p, 0.0, rng) == A


def test_randomize_only_touches_upper_blocks(maze20, rng):
    p = Partition((2, 3), 1)
    A = base_block_matrix(p, maze20)
    R = randomize_upper_blocks(A, p, 1.0, rng)
    owner = np.repeat(np.arange(3), [2, 3, 1])
    upper = owner[None, :] > owner[:, None]
    assert np.array_equal(R.entries[~upper], A.entries[~upper])
    assert np.all(R.entries[upper] != maze20.zero)


def test_worked_randomization_keeps_the_block_shape(maze20):
    # Upper entries of the six by six construction example
    R = mat(maze20, """
        0 1 0 0 0 0
        1 0 1 r b l
        0 0 0 1 0 e
        0 0 0 0 1 0
        0 0 1 0 0 0
        0 0 0 0 0 1
    """)
    p = Partition((2, 3), 1)
    A = base_block_matrix(p, maze20)
    owner = np.repeat(np.arange(3), [2, 3, 1])
    upper = owner[None, :] > owner[:, None]
    assert np.array_equal(R.entries[~upper], A.entries[~upper])
    assert order_profile(R).distinct_powers >= 6


def test_randomized_order_at_least_lcm(maze20, rng):
    for parts in [(2, 3), (3, 4), (2, 5)]:
        p = Partition(parts, 1)
        R = randomize_upper_blocks(base_block_matrix(p, maze20), p, 0.5, rng)
        assert order_profile(R).distinct_powers >= p.lcm


def test_randomize_shape_mismatch(maze20, rng):
    with pytest.raises(ParamsError, match="shape mismatch"):
        randomize_upper_blocks(identity(maze20, 4), Partition((2, 3)), 0.5, rng)


def test_randomize_needs_a_nonzero_element(rng):
    trivial = SemiringTable(["0"], [[0]], [[0]])
    A = MatrixSR(trivial, np.zeros((2, 2), dtype=np.uint8))
    with pytest.raises(ParamsError, match="no nonzero element"):
        randomize_upper_blocks(A, Partition((1,), 1), 1.0, rng)


def test_random_gp(maze20, boolean):
    P = random_generalized_permutation(6, boolean, np.random.default_rng(3))
    assert P.units == (boolean.one,) * 6
    assert sorted(P.perm) == list(range(6))

    single = random_generalized_permutation(1, maze20, np.random.default_rng(3))
    assert single.perm == (0,)

    again = random_generalized_permutation(6, maze20, np.random.default_rng(9))
    assert again == random_generalized_permutation(6, maze20, np.random.default_rng(9))


def test_public_matrix_small(maze20, rng):
    M, provenance = build_public_matrix(5, maze20, 0.25, rng, seed=5)
    assert M.dim == 5
    assert provenance["partition"] == {"parts": [2, 3], "padding": 0, "total": 5, "lcm": 6}
    assert provenance["order"]["exact"]
    assert provenance["order"]["distinct_powers"] >= 6
    assert provenance["table_digest"] == table_digest(maze20).hex()


def test_public_matrix_without_randomness_has_order_lcm(maze20, rng):
    P = GeneralizedPermutation(maze20, tuple(range(7)), (maze20.one,) * 7)
    M, provenance = build_public_matrix(7, maze20, 0.0, rng, P=P)
    assert provenance["order"]["distinct_powers"] == provenance["partition"]["lcm"] == 12


def test_public_matrix_at_total_twenty(maze20, rng):
    M, provenance = build_public_matrix(20, maze20, 0.25, rng)
    assert provenance["order"]["lower_bound"] >= 280


def test_public_matrix_capped(maze20, rng):
    _, provenance = build_public_matrix(20, maze20, 0.25, rng, cap=10)
    assert not provenance["order"]["exact"]
    assert provenance["order"]["lower_bound"] >= provenance["partition"]["lcm"]


def test_polynomial_evaluation(maze20, rng):
    M, _ = build_public_matrix(5, maze20, 0.25, rng)
    one, zero = maze20.one, maze20.zero
    assert evaluate_polynomial([zero, one], M) == M
    assert evaluate_polynomial([one, one], M) == mat_add(identity(maze20, 5), M)
    assert evaluate_polynomial([zero, zero, zero, one], M) == mat_mul(mat_mul(M, M), M)
    with pytest.raises(ParamsError):
        evaluate_polynomial([zero, zero], M)


def test_commuting_vector_forced(maze20, rng):
    M, _ = build_public_matrix(5, maze20, 0.25, rng)
    one, zero = maze20.one, maze20.zero
    v, _ = build_commuting_vector(M, 1, 1, rng, polynomials=[[zero, one]])
    assert list(v) == [M]
    v, _ = build_commuting_vector(M, 3, 1, rng, polynomials=[[one, one]] * 3)
    assert all(x == mat_add(identity(maze20, 5), M) for x in v)


def test_commuting_vectors_commute(maze20, rng):
    M, _ = build_public_matrix(5, maze20, 0.25, rng)
    central = center(maze20)
    for _ in range(100):
        v, polynomials = build_commuting_vector(M, 3, 3, rng)
        assert v.commuting_pairs_ok()
        assert all(mat_mul(M, x) == mat_mul(x, M) for x in v)
        for coeffs in polynomials:
            assert len(coeffs) == 4
            assert set(coeffs) <= central
            assert sum(c != maze20.zero for c in coeffs) >= 2


def test_commuting_vector_needs_a_nonzero_center(rng):
    trivial = SemiringTable(["0"], [[0]], [[0]])
    with pytest.raises(ParamsError, match="Center is"):
        build_commuting_vector(MatrixSR(trivial, [[0]]), 1, 1, rng)


def test_generate_params_is_reproducible(maze20):
    p1, prov1 = generate_params(maze20, total=6, n=3, max_degree=2, entry_bound=100, seed=42)
    p2, prov2 = generate_params(maze20, total=6, n=3, max_degree=2, entry_bound=100, seed=42)
    assert encode_params(p1) == encode_params(p2)
    assert prov1 == prov2
    p3, _ = generate_params(maze20, total=6, n=3, max_degree=2, entry_bound=100, seed=43)
    assert params_digest(p3) != params_digest(p1)


def test_provenance_document(maze20):
    _, provenance = generate_params(maze20, total=6, n=2, max_degree=2, entry_bound=100, seed=1)
    validate_provenance(json.loads(json.dumps(provenance)))
    assert provenance["seed"] == 1
    assert len(provenance["polynomials"]) == 2
    with pytest.raises(ParamsError, match="Invalid provenance"):
        validate_provenance({**provenance, "table_digest": "xyz"})


def test_params_file(small_params, maze20, boolean):
    data = encode_params(small_params)
    assert data[:5] == b"SKXP\x01"
    assert data[5:37] == table_digest(maze20)
    assert data[37:49] == bytes.fromhex("0005" "0002" "0000000000000008")

    decoded = decode_params(data, maze20)
    assert decoded.M == small_params.M
    assert decoded.v == small_params.v
    assert params_digest(decoded) == params_digest(small_params)

    with pytest.raises(ParamsError, match="different semiring"):
        decode_params(data, boolean)
    with pytest.raises(ParamsError):
        decode_params(data[:-1], maze20)
    with pytest.raises(ParamsError, match="Bad magic"):
        decode_params(b"XXXX" + data[4:], maze20)
    with pytest.raises(ParamsError, match="trailing"):
        decode_params(data + b"\x00", maze20)


def test_params_validation(small_params):
    with pytest.raises(ParamsError):
        PublicParams(small_params.table, small_params.M, small_params.v, 0)


def test_params_file_needs_a_nonempty_vector(small_params, maze20):
    data = encode_params(small_params)
    empty = data[:37] + struct.pack(">HHQ", small_params.dim, 0, 8) + encode_matrix(small_params.M)
    with pytest.raises(ParamsError, match="empty commuting vector"):
        decode_params(empty, maze20)


def test_params_file_needs_commuting_matrices(maze20):
    A = mat(maze20, "0 1\n0 0")
    B = mat(maze20, "0 0\n1 0")
    loose = PublicParams(maze20, identity(maze20, 2), CommutingVector([A, B]), 8)
    with pytest.raises(ParamsError, match="pairwise commute"):
        decode_params(encode_params(loose), maze20)

    swap = cycle(maze20, 2)
    corner = mat(maze20, "1 0\n0 0")
    stray = PublicParams(maze20, swap, CommutingVector([corner]), 8)
    with pytest.raises(ParamsError, match="commute with M"):
        decode_params(encode_params(stray), maze20)
    # the same vector is accepted next to a matrix it commutes with
    kept = PublicParams(maze20, identity(maze20, 2), CommutingVector([corner]), 8)
    assert decode_params(encode_params(kept), maze20).v[0] == corner
