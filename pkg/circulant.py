__all__ = [
    "CirculantNat",
    "CommutingVector",
    "CirculantError",
    "circ_identity",
    "circ_to_int_matrix",
    "circ_mul",
    "circ_act",
    "circ_det_int",
    "circ_random",
    "monomial_vector",
    "encode_circulant",
    "decode_circulant",
]

# Standard Library
import logging
import struct
from dataclasses import dataclass

# Dependencies
import numpy as np
from sympy import Matrix

# Internal
from settings import SemikexError
from semiring import SemiringTable
from matrix_semiring import MatrixSR, MatrixError, identity, mat_mul, mat_pow


log = logging.getLogger(__name__)

MAX_ENTRY = 2 ** 64 - 1


class CirculantError(SemikexError):
    pass


@dataclass(frozen=True)
class CirculantNat:
    """Circ(c_0, ..., c_{n-1}) over the naturals; c is the first column, entry (i, j) is c[(i - j) mod n]."""
    c: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "c", tuple(int(x) for x in self.c))
        if len(self.c) == 0:
            raise CirculantError("A circulant needs n >= 1")
        for x in self.c:
            if not 0 <= x <= MAX_ENTRY:
                raise CirculantError(f"Circulant entry {x} outside [0, 2^64)")

    @property
    def n(self) -> int:
        return len(self.c)

    def is_zero(self) -> bool:
        return not any(self.c)

    def __str__(self) -> str:
        return "Circ(" + ",".join(str(x) for x in self.c) + ")"


class CommutingVector:
    """n matrices over one table and dimension that pairwise commute."""

    __slots__ = ("mats",)

    def __init__(self, mats):
        mats = tuple(mats)
        if len(mats) == 0:
            raise CirculantError("A commuting vector needs at least one matrix")
        first = mats[0]
        for m in mats[1:]:
            if m.dim != first.dim or (m.table is not first.table and m.table != first.table):
                raise CirculantError("Commuting vector entries must share table and dimension")
        self.mats: tuple[MatrixSR, ...] = mats

    @property
    def n(self) -> int:
        return len(self.mats)

    @property
    def dim(self) -> int:
        return self.mats[0].dim

    @property
    def table(self) -> SemiringTable:
        return self.mats[0].table

    def __getitem__(self, i: int) -> MatrixSR:
        return self.mats[i]

    def __iter__(self):
        return iter(self.mats)

    def __len__(self) -> int:
        return len(self.mats)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CommutingVector):
            return NotImplemented
        return self.mats == other.mats

    def __hash__(self) -> int:
        return hash(self.mats)

    def commuting_pairs_ok(self) -> bool:
        for i in range(self.n):
            for j in range(i + 1, self.n):
                if mat_mul(self.mats[i], self.mats[j]) != mat_mul(self.mats[j], self.mats[i]):
                    return False
        return True

    def check_commuting(self) -> None:
        """On success, returns None. On failure, throws."""
        if not self.commuting_pairs_ok():
            raise CirculantError("Vector entries do not pairwise commute")


def circ_identity(n: int) -> CirculantNat:
    return CirculantNat((1,) + (0,) * (n - 1))


def circ_to_int_matrix(A: CirculantNat) -> list[list[int]]:
    return [[A.c[(i - j) % A.n] for j in range(A.n)] for i in range(A.n)]


def circ_mul(A: CirculantNat, B: CirculantNat) -> CirculantNat:
    if A.n != B.n:
        raise CirculantError(f"Size mismatch: {A.n} vs {B.n}")
    n = A.n
    out = []
    for k in range(n):
        ck = sum(A.c[i] * B.c[(k - i) % n] for i in range(n))
        if ck > MAX_ENTRY:
            raise CirculantError(f"Overflow: convolution entry {k} is {ck}, beyond 64 bits")
        out.append(ck)
    return CirculantNat(tuple(out))


def circ_act(C: CirculantNat, v: CommutingVector) -> CommutingVector:
    """
    result[i] = prod_j v[j] ** c[(i - j) mod n], factors taken in increasing j.
    Zero exponents contribute the identity and are skipped.
    """
    if C.n != v.n:
        raise CirculantError(f"Size mismatch: circulant n={C.n}, vector n={v.n}")

    powers: dict[tuple[int, int], MatrixSR] = {}
    out = []
    for i in range(C.n):
        acc = None
        for j in range(v.n):
            e = C.c[(i - j) % C.n]
            if e == 0:
                continue
            if (j, e) not in powers:
                powers[(j, e)] = mat_pow(v[j], e)
            acc = powers[(j, e)] if acc is None else mat_mul(acc, powers[(j, e)])
        if acc is None:
            try:
                acc = identity(v.table, v.dim)
            except MatrixError as e:
                raise CirculantError("The zero circulant maps onto the identity, which this table lacks") from e
        out.append(acc)
    return CommutingVector(out)


def circ_det_int(A: CirculantNat) -> int:
    """Exact integer determinant by fraction-free (Bareiss) elimination."""
    return int(Matrix(circ_to_int_matrix(A)).det(method="bareiss"))


def circ_random(n: int, bound: int, rng: np.random.Generator) -> CirculantNat:
    """Uniform entries on [0, bound], resampling the all-zero vector."""
    if n < 1:
        raise CirculantError("A circulant needs n >= 1")
    if bound < 1:
        raise CirculantError("degenerate bound: the only circulant in [0, 0] is the forbidden all-zero one")
    if bound > MAX_ENTRY:
        raise CirculantError(f"Bound {bound} beyond 64 bits")
    while True:
        c = rng.integers(0, bound, size=n, dtype=np.uint64, endpoint=True)
        if c.any():
            return CirculantNat(tuple(int(x) for x in c))


def monomial_vector(M: MatrixSR, exponents) -> CommutingVector:
    """(M^b_0, ..., M^b_{n-1})"""
    return CommutingVector(mat_pow(M, int(b)) for b in exponents)


def encode_circulant(A: CirculantNat) -> bytes:
    return struct.pack(f">H{A.n}Q", A.n, *A.c)


def decode_circulant(data: bytes, offset: int = 0) -> tuple[CirculantNat, int]:
    if len(data) - offset < 2:
        raise CirculantError("Truncated circulant: missing n")
    (n,) = struct.unpack_from(">H", data, offset)
    offset += 2
    if n == 0 or len(data) - offset < 8 * n:
        raise CirculantError(f"Truncated circulant: n={n} needs {8 * n} entry bytes")
    c = struct.unpack_from(f">{n}Q", data, offset)
    return CirculantNat(c), offset + 8 * n
