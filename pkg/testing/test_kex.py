# Standard Library
import json

# Dependencies
import numpy as np
import pytest

# Internal
from conftest import VAULT, cycle, random_matrix
from settings import SemikexError
from matrix_semiring import MatrixSR, mat_pow
from circulant import CirculantNat, CommutingVector, circ_act, circ_mul, circ_identity, circ_random
from paramgen import PublicParams, generate_params, encode_params, random_generalized_permutation
from kex import (
    PrivateKey, PublicKeyMsg, KexSession, KeyFormatError, keygen, derive_shared, canonical_encode, decode_vector,
    key_fingerprint, encode_private_key, decode_private_key,
)


def test_single_coordinate_public_key(maze20):
    M = cycle(maze20, 7)
    params = PublicParams(maze20, M, CommutingVector([M]), entry_bound=6)
    private = PrivateKey(CirculantNat((4,)))
    session = KexSession(params, np.random.default_rng(0))
    pk = session.start(private)
    assert pk.vec == CommutingVector([mat_pow(M, 4)])


def test_random_sessions_agree(maze20, rng):
    for trial in range(100):
        params, _ = generate_params(
            maze20,
            total=int(rng.integers(3, 7)),
            n=int(rng.integers(1, 5)),
            max_degree=2,
            entry_bound=50,
            seed=trial,
        )
        a, pk_a = keygen(params, rng)
        b, pk_b = keygen(params, rng)
        alice = derive_shared(a, pk_b)
        bob = derive_shared(b, pk_a)

        assert alice.vec == bob.vec
        assert canonical_encode(alice.vec) == canonical_encode(bob.vec)
        assert alice.fingerprint == bob.fingerprint
        assert alice.vec == circ_act(circ_mul(a.circ, b.circ), params.v)


def test_identity_private_key_returns_peer_key(small_params, rng):
    _, pk = keygen(small_params, rng)
    shared = derive_shared(PrivateKey(circ_identity(small_params.n)), pk)
    assert shared.vec == pk.vec


def test_keys_respect_the_bound(small_params, rng):
    for _ in range(50):
        private, _ = keygen(small_params, rng)
        assert max(private.circ.c) <= small_params.entry_bound
        assert not private.circ.is_zero()


def test_keygen_is_reproducible(small_params):
    first = keygen(small_params, np.random.default_rng(99))
    second = keygen(small_params, np.random.default_rng(99))
    assert first[0] == second[0]
    assert first[1] == second[1]


def test_canonical_encoding_layout(maze20):
    vec = CommutingVector([MatrixSR(maze20, [[0]])])
    assert canonical_encode(vec) == bytes.fromhex("0001" "0001" "00")


def test_canonical_encoding_is_injective(maze20, rng):
    vectors = {CommutingVector([random_matrix(maze20, 2, rng)]) for _ in range(1000)}
    encodings = {canonical_encode(v) for v in vectors}
    fingerprints = {key_fingerprint(v) for v in vectors}
    assert len(encodings) == len(vectors)
    assert len(fingerprints) == len(vectors)


def test_vector_decoding(small_params):
    data = canonical_encode(small_params.v)
    vec, end = decode_vector(data + b"rest", small_params.table)
    assert vec == small_params.v
    assert end == len(data)
    with pytest.raises(KeyFormatError):
        decode_vector(data[:-3], small_params.table)
    with pytest.raises(KeyFormatError, match="length 0"):
        decode_vector(b"\x00\x00", small_params.table)


def test_fingerprint_changes_with_one_entry(maze20, rng):
    A = random_matrix(maze20, 3, rng)
    entries = A.entries.copy()
    entries[1, 2] = (entries[1, 2] + 1) % maze20.size
    B = MatrixSR(maze20, entries)
    assert key_fingerprint(CommutingVector([A])) == key_fingerprint(CommutingVector([A]))
    assert key_fingerprint(CommutingVector([A])) != key_fingerprint(CommutingVector([B]))
    assert len(key_fingerprint(CommutingVector([A]))) == 32


def test_private_key_file(small_params, rng):
    private, _ = keygen(small_params, rng)
    data = encode_private_key(private)
    assert data[:5] == b"SKXK\x01"
    assert len(data) == 7 + 8 * small_params.n
    assert decode_private_key(data) == private

    with pytest.raises(KeyFormatError, match="Bad magic"):
        decode_private_key(b"SKXP" + data[4:])
    with pytest.raises(KeyFormatError, match="does not match"):
        decode_private_key(data[:-1])
    with pytest.raises(KeyFormatError, match="nonzero"):
        decode_private_key(b"SKXK\x01\x00\x01" + bytes(8))


def test_private_key_stays_out_of_public_bytes(small_params, rng):
    # Wide entries so that the secret bytes cannot pass for sparse matrix data
    params = PublicParams(small_params.table, small_params.M, small_params.v, 2 ** 40)
    private, public = keygen(params, rng)
    secret = encode_private_key(private)[7:]
    for blob in (canonical_encode(public.vec), encode_params(params)):
        assert secret not in blob
    assert repr(private) == f"PrivateKey(n={private.n})"


def test_shape_mismatch(small_params, maze20, rng):
    private, _ = keygen(small_params, rng)
    stranger = PublicKeyMsg(CommutingVector([cycle(maze20, 5)] * (small_params.n + 1)))
    with pytest.raises(KeyFormatError, match="shape mismatch"):
        derive_shared(private, stranger)

    session = KexSession(small_params, rng)
    session.start()
    wrong_dim = PublicKeyMsg(CommutingVector([cycle(maze20, 3)] * small_params.n))
    with pytest.raises(KeyFormatError, match="shape mismatch"):
        session.receive(wrong_dim)


def test_private_key_over_the_bound(small_params):
    session = KexSession(small_params, np.random.default_rng(0))
    with pytest.raises(KeyFormatError, match="exceeds the entry bound"):
        session.start(PrivateKey(CirculantNat((small_params.entry_bound + 1,) * small_params.n)))


def test_session_flow(small_params):
    alice = KexSession(small_params, np.random.default_rng(1))
    bob = KexSession(small_params, np.random.default_rng(2))
    pk_a, pk_b = alice.start(), bob.start()

    with pytest.raises(SemikexError, match="Cannot confirm"):
        alice.confirm(b"")

    shared_a = alice.receive(pk_b)
    shared_b = bob.receive(pk_a)
    assert alice.confirm(shared_b.fingerprint)
    assert not bob.confirm(bytes(32))
    assert alice.state.value == "confirmed"
    assert bob.state.value == "failed"
    assert shared_a.vec == shared_b.vec

    with pytest.raises(SemikexError, match="Cannot generate keys"):
        alice.start()


GOLDEN = VAULT / "golden" / "seeded_draws.json"


def seeded_draws(maze20, small_params) -> dict:
    gp = random_generalized_permutation(5, maze20, np.random.default_rng(2024))
    private, public = keygen(small_params, np.random.default_rng(2024))
    return {
        "circ_random": [int(x) for x in circ_random(4, 1000, np.random.default_rng(2024)).c],
        "generalized_permutation": {
            "perm": [int(x) for x in gp.perm],
            "units": [maze20.names[u] for u in gp.units],
        },
        "keygen": {
            "private": [int(x) for x in private.circ.c],
            "public_fingerprint": key_fingerprint(public.vec).hex(),
        },
    }


def test_seeded_draws_are_pinned(maze20, small_params):
    draws = seeded_draws(maze20, small_params)
    if not GOLDEN.exists():
        GOLDEN.parent.mkdir(parents=True, exist_ok=True)
        GOLDEN.write_text(json.dumps(draws, indent=2) + "\n")
        pytest.skip(f"recorded {GOLDEN.relative_to(VAULT)}, later runs compare against it")
    assert draws == json.loads(GOLDEN.read_text())
