__all__ = [
    "PrivateKey",
    "PublicKeyMsg",
    "SharedSecret",
    "KexSession",
    "KeyFormatError",
    "keygen",
    "derive_shared",
    "canonical_encode",
    "decode_vector",
    "key_fingerprint",
    "encode_private_key",
    "decode_private_key",
]

# Standard Library
import hashlib
import logging
import struct
from dataclasses import dataclass
from enum import Enum

# Dependencies
import numpy as np

# Internal
from settings import SemikexError
from semiring import SemiringTable
from matrix_semiring import MatrixError, encode_matrix, decode_matrix
from circulant import CirculantNat, CommutingVector, CirculantError, circ_act, circ_random
from paramgen import PublicParams


log = logging.getLogger(__name__)

KEY_MAGIC = b"SKXK"
KEY_VERSION = 0x01


class KeyFormatError(SemikexError):
    pass


@dataclass(frozen=True)
class PrivateKey:
    circ: CirculantNat

    def __post_init__(self):
        if self.circ.is_zero():
            raise KeyFormatError("A private key needs at least one nonzero entry")

    @property
    def n(self) -> int:
        return self.circ.n

    def check_bound(self, entry_bound: int) -> None:
        """On success, returns None. On failure, throws."""
        if max(self.circ.c) > entry_bound:
            raise KeyFormatError(f"Private entry {max(self.circ.c)} exceeds the entry bound {entry_bound}")

    def __repr__(self) -> str:
        # Never shows key entries
        return f"PrivateKey(n={self.n})"


@dataclass(frozen=True)
class PublicKeyMsg:
    vec: CommutingVector


@dataclass(frozen=True)
class SharedSecret:
    vec: CommutingVector
    fingerprint: bytes


def canonical_encode(vec: CommutingVector) -> bytes:
    return struct.pack(">H", vec.n) + b"".join(encode_matrix(x) for x in vec)


def decode_vector(data: bytes, table: SemiringTable, offset: int = 0) -> tuple[CommutingVector, int]:
    if len(data) - offset < 2:
        raise KeyFormatError("Truncated vector: missing n")
    (n,) = struct.unpack_from(">H", data, offset)
    offset += 2
    if n == 0:
        raise KeyFormatError("Vector of length 0")
    mats = []
    try:
        for _ in range(n):
            X, offset = decode_matrix(data, table, offset)
            mats.append(X)
        return CommutingVector(mats), offset
    except (MatrixError, CirculantError) as e:
        raise KeyFormatError(f"Corrupt vector encoding: {e}") from e


def key_fingerprint(vec: CommutingVector) -> bytes:
    return hashlib.sha256(canonical_encode(vec)).digest()


def _check_shape(expected: CommutingVector, other: CommutingVector) -> None:
    if expected.n != other.n or expected.dim != other.dim:
        raise KeyFormatError(
            f"shape mismatch: n={other.n}, dim={other.dim} where n={expected.n}, dim={expected.dim} is expected"
        )
    if expected.table != other.table:
        raise KeyFormatError("shape mismatch: vectors over different semirings")


def keygen(params: PublicParams, rng: np.random.Generator) -> tuple[PrivateKey, PublicKeyMsg]:
    if params.n < 1:
        raise KeyFormatError("degenerate params: n = 0")
    private = PrivateKey(circ_random(params.n, params.entry_bound, rng))
    public = PublicKeyMsg(circ_act(private.circ, params.v))
    log.debug("Generated key pair, pk fingerprint %s", key_fingerprint(public.vec).hex()[:16])
    return private, public


def derive_shared(private: PrivateKey, peer_pk: PublicKeyMsg) -> SharedSecret:
    if private.n != peer_pk.vec.n:
        raise KeyFormatError(f"shape mismatch: private key n={private.n}, peer key n={peer_pk.vec.n}")
    vec = circ_act(private.circ, peer_pk.vec)
    return SharedSecret(vec, key_fingerprint(vec))


def encode_private_key(key: PrivateKey) -> bytes:
    return KEY_MAGIC + bytes([KEY_VERSION]) + struct.pack(f">H{key.n}Q", key.n, *key.circ.c)


def decode_private_key(data: bytes) -> PrivateKey:
    if len(data) < 7:
        raise KeyFormatError("Truncated key file")
    if data[:4] != KEY_MAGIC:
        raise KeyFormatError(f"Bad magic {data[:4]!r}, expected {KEY_MAGIC!r}")
    if data[4] != KEY_VERSION:
        raise KeyFormatError(f"Unsupported key file version {data[4]}")
    (n,) = struct.unpack_from(">H", data, 5)
    if len(data) != 7 + 8 * n:
        raise KeyFormatError(f"Key file length {len(data)} does not match n={n}")
    try:
        return PrivateKey(CirculantNat(struct.unpack_from(f">{n}Q", data, 7)))
    except CirculantError as e:
        raise KeyFormatError(str(e)) from e


class SessionState(Enum):
    FRESH = "fresh"
    KEYED = "keyed"
    DERIVED = "derived"
    CONFIRMED = "confirmed"
    FAILED = "failed"


class KexSession:
    """
    One party's side of an exchange. keygen -> derive -> confirm, in that order.
    Not shared between threads.
    """

    def __init__(self, params: PublicParams, rng: np.random.Generator):
        self.params = params
        self.rng = rng
        self.state = SessionState.FRESH
        self._private: PrivateKey | None = None
        self.public: PublicKeyMsg | None = None
        self.shared: SharedSecret | None = None

    def _expect(self, state: SessionState, action: str) -> None:
        if self.state is not state:
            raise SemikexError(f"Cannot {action} in state {self.state.value}")

    def start(self, private: PrivateKey | None = None) -> PublicKeyMsg:
        self._expect(SessionState.FRESH, "generate keys")
        if private is None:
            self._private, self.public = keygen(self.params, self.rng)
        else:
            if private.n != self.params.n:
                raise KeyFormatError(f"shape mismatch: private key n={private.n}, params n={self.params.n}")
            private.check_bound(self.params.entry_bound)
            self._private = private
            self.public = PublicKeyMsg(circ_act(private.circ, self.params.v))
        self.state = SessionState.KEYED
        return self.public

    def receive(self, peer_pk: PublicKeyMsg) -> SharedSecret:
        self._expect(SessionState.KEYED, "derive a shared secret")
        _check_shape(self.params.v, peer_pk.vec)
        self.shared = derive_shared(self._private, peer_pk)
        self.state = SessionState.DERIVED
        return self.shared

    def confirm(self, peer_fingerprint: bytes) -> bool:
        self._expect(SessionState.DERIVED, "confirm")
        ok = peer_fingerprint == self.shared.fingerprint
        self.state = SessionState.CONFIRMED if ok else SessionState.FAILED
        if not ok:
            log.warning("Key confirmation failed: fingerprints differ")
        return ok

    @property
    def private_key(self) -> PrivateKey | None:
        return self._private
