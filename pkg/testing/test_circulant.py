# Standard Library
import math
from collections import Counter

# Dependencies
import numpy as np
import pytest

# Internal
from conftest import cycle, mat, random_matrix
from circulant import (
    CirculantNat, CommutingVector, CirculantError, circ_identity, circ_to_int_matrix, circ_mul, circ_act,
    circ_det_int, circ_random, monomial_vector, encode_circulant, decode_circulant,
)
from matrix_semiring import identity, mat_mul, mat_pow
from paramgen import build_commuting_vector


def test_expanded_form():
    assert circ_to_int_matrix(CirculantNat((1, 2, 3))) == [[1, 3, 2], [2, 1, 3], [3, 2, 1]]


def test_product_is_cyclic_convolution():
    assert circ_mul(CirculantNat((1, 2)), CirculantNat((3, 4))) == CirculantNat((11, 10))
    A, B = CirculantNat((1, 0, 2)), CirculantNat((0, 3, 1))
    assert circ_mul(A, B) == circ_mul(B, A)
    assert circ_mul(A, circ_identity(3)) == A


def test_product_matches_integer_matrices(rng):
    for _ in range(20):
        n = int(rng.integers(1, 6))
        A = CirculantNat(tuple(rng.integers(0, 9, size=n)))
        B = CirculantNat(tuple(rng.integers(0, 9, size=n)))
        expected = np.array(circ_to_int_matrix(A)) @ np.array(circ_to_int_matrix(B))
        assert circ_to_int_matrix(circ_mul(A, B)) == expected.tolist()


def test_overflow_is_an_error():
    big = CirculantNat((2 ** 63, 2 ** 63))
    with pytest.raises(CirculantError, match="Overflow"):
        circ_mul(big, big)


def test_entries_are_64_bit():
    with pytest.raises(CirculantError):
        CirculantNat((2 ** 64,))
    with pytest.raises(CirculantError):
        CirculantNat(())


def test_determinants():
    assert circ_det_int(CirculantNat((1, 2))) == -3
    assert circ_det_int(CirculantNat((1, 1))) == 0
    assert circ_det_int(circ_identity(5)) == 1
    # det Circ(c) = prod over n-th roots of unity; for (2, 1, 1) that is 4 * 1 * 1
    assert circ_det_int(CirculantNat((2, 1, 1))) == 4


def test_single_coordinate_action(maze20):
    M = cycle(maze20, 5)
    v = CommutingVector([M])
    assert circ_act(CirculantNat((3,)), v) == CommutingVector([mat_pow(M, 3)])


def test_identity_action_and_zero_action(maze20, rng):
    M = random_matrix(maze20, 3, rng)
    v = monomial_vector(M, [1, 2])
    assert circ_act(circ_identity(2), v) == v
    I = identity(maze20, 3)
    assert circ_act(CirculantNat((0, 0)), v) == CommutingVector([I, I])


def test_action_coordinates_by_hand(maze20, rng):
    M = random_matrix(maze20, 3, rng)
    v = monomial_vector(M, [1, 2])
    out = circ_act(CirculantNat((2, 1)), v)
    # out[0] = v0^c0 * v1^c1, out[1] = v0^c1 * v1^c0
    assert out[0] == mat_mul(mat_pow(v[0], 2), v[1])
    assert out[1] == mat_mul(v[0], mat_pow(v[1], 2))


def test_action_law(maze20, rng):
    for trial in range(100):
        n = int(rng.integers(1, 5))
        dim = int(rng.integers(1, 5))
        M = random_matrix(maze20, dim, rng)
        if trial % 2:
            v = monomial_vector(M, rng.integers(0, 4, size=n))
        else:
            v, _ = build_commuting_vector(M, n, 2, rng)
        A = CirculantNat(tuple(rng.integers(0, 9, size=n)))
        B = CirculantNat(tuple(rng.integers(0, 9, size=n)))
        assert circ_act(A, circ_act(B, v)) == circ_act(circ_mul(A, B), v)


def test_size_mismatch(maze20):
    v = CommutingVector([cycle(maze20, 2)])
    with pytest.raises(CirculantError, match="Size mismatch"):
        circ_act(CirculantNat((1, 1)), v)


def test_commuting_vector_checks(maze20):
    with pytest.raises(CirculantError):
        CommutingVector([cycle(maze20, 2), cycle(maze20, 3)])
    with pytest.raises(CirculantError):
        CommutingVector([])
    M = cycle(maze20, 3)
    v = CommutingVector([M, mat_pow(M, 2)])
    assert v.commuting_pairs_ok()
    assert v == CommutingVector([M, mat_mul(M, M)])
    assert (v.n, v.dim) == (2, 3)


def test_non_commuting_vector_is_detected(maze20):
    v = CommutingVector([mat(maze20, "0 1\n0 0"), mat(maze20, "0 0\n1 0")])
    with pytest.raises(CirculantError, match="commute"):
        v.check_commuting()


def test_random_circulants(rng):
    C = circ_random(6, 5, rng)
    assert C.n == 6
    assert max(C.c) <= 5 and not C.is_zero()
    assert circ_random(3, 10 ** 6, np.random.default_rng(4)) == circ_random(3, 10 ** 6, np.random.default_rng(4))
    # Only nonzero vectors exist in [0, 1]^1 once the zero one is resampled
    assert all(circ_random(1, 1, rng) == CirculantNat((1,)) for _ in range(20))


def test_random_circulants_are_uniform(rng):
    samples = 10 ** 4
    counts = Counter(circ_random(2, 3, rng).c for _ in range(samples))
    # 4^2 - 1 nonzero vectors in [0, 3]^2
    assert len(counts) == 15 and (0, 0) not in counts
    p = 1 / 15
    sigma = math.sqrt(samples * p * (1 - p))
    assert all(abs(count - samples * p) <= 5 * sigma for count in counts.values())


def test_degenerate_bound(rng):
    with pytest.raises(CirculantError, match="degenerate bound"):
        circ_random(3, 0, rng)


def test_full_64_bit_range(rng):
    C = circ_random(4, 2 ** 64 - 1, rng)
    assert all(0 <= x < 2 ** 64 for x in C.c)


def test_circulant_encoding():
    C = CirculantNat((1, 2 ** 64 - 1))
    data = encode_circulant(C)
    assert data[:2] == b"\x00\x02"
    assert data[2:10] == (1).to_bytes(8, "big")
    assert decode_circulant(b"\xff" + data, offset=1) == (C, 1 + len(data))
    with pytest.raises(CirculantError, match="Truncated"):
        decode_circulant(data[:-1])


def test_str():
    assert str(CirculantNat((75, 51, 87, 95))) == "Circ(75,51,87,95)"
