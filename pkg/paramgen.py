__all__ = [
    "Partition",
    "PublicParams",
    "ParamsError",
    "MAX_TOTAL",
    "best_partition",
    "landau_bounds",
    "base_block_matrix",
    "randomize_upper_blocks",
    "random_generalized_permutation",
    "build_public_matrix",
    "evaluate_polynomial",
    "build_commuting_vector",
    "generate_params",
    "encode_params",
    "decode_params",
    "params_digest",
    "validate_provenance",
]

# Standard Library
import hashlib
import json
import logging
import math
import struct
from dataclasses import dataclass

# Dependencies
import numpy as np
from jsonschema import validate, ValidationError
from sympy import primerange

# Internal
from settings import SemikexError, dir_path
from semiring import SemiringTable, center, inverses, table_digest
from matrix_semiring import (
    MatrixSR, GeneralizedPermutation, MatrixError, DEFAULT_ORDER_CAP,
    identity, scalar, mat_add, mat_mul, mat_pow, order_profile, conjugate,
    commutes, encode_matrix, decode_matrix,
)
from circulant import CommutingVector, CirculantError, MAX_ENTRY


log = logging.getLogger(__name__)

MAX_TOTAL = 64
PARAMS_MAGIC = b"SKXP"
PARAMS_VERSION = 0x01


class ParamsError(SemikexError):
    pass


@dataclass(frozen=True)
class Partition:
    parts: tuple[int, ...]
    padding: int = 0

    def __post_init__(self):
        if not self.parts or any(a < 1 for a in self.parts):
            raise ParamsError(f"Partition parts must be positive, got {self.parts}")
        if self.padding < 0:
            raise ParamsError(f"Negative padding {self.padding}")

    @property
    def total(self) -> int:
        return sum(self.parts) + self.padding

    @property
    def lcm(self) -> int:
        return math.lcm(*self.parts)

    def blocks(self) -> list[int]:
        """Diagonal block sizes, the identity padding last."""
        return list(self.parts) + ([self.padding] if self.padding else [])

    def as_dict(self) -> dict:
        return {"parts": list(self.parts), "padding": self.padding, "total": self.total, "lcm": self.lcm}


def best_partition(total: int) -> Partition:
    """
    Parts with sum <= total maximizing their lcm, i.e. attaining Landau's g(total).

    Only prime powers of distinct primes are worth using, so this is a knapsack
    over the primes up to total where each prime contributes at most one power.
    Ties go to the smaller sum.
    """
    if not 1 <= total <= MAX_TOTAL:
        raise ParamsError(f"total exceeds partition DP limit {MAX_TOTAL}" if total > MAX_TOTAL
                          else f"total must be positive, got {total}")

    # used sum -> (lcm, parts)
    best: dict[int, tuple[int, tuple[int, ...]]] = {0: (1, ())}
    for p in primerange(2, total + 1):
        updated = dict(best)
        for used, (value, parts) in best.items():
            q = p
            while used + q <= total:
                candidate = (value * q, parts + (q,))
                current = updated.get(used + q)
                if current is None or candidate[0] > current[0]:
                    updated[used + q] = candidate
                q *= p
        best = updated

    used, (value, parts) = max(best.items(), key=lambda item: (item[1][0], -item[0]))
    if not parts:
        return Partition((1,), total - 1)
    return Partition(tuple(sorted(parts)), total - used)


def landau_bounds(total: int) -> tuple[float, float]:
    """
    The bracket for ln g(n) as usually displayed:
    n ln n <= ln g(n) <= sqrt(n) ln n (1 + ln ln n / (2 ln n)).
    Only the upper side is a true bound; the lower side is returned as printed.
    """
    if total < 3:
        raise ParamsError(f"Landau bounds need total >= 3, got {total}")
    ln = math.log(total)
    lower = total * ln
    upper = math.sqrt(total) * ln * (1 + math.log(ln) / (2 * ln))
    return lower, upper


def base_block_matrix(p: Partition, table: SemiringTable) -> MatrixSR:
    """Block diagonal of the cycles T_a (row i has its 1 in column i+1, the last wraps) and Id_s."""
    if table.zero is None or table.one is None:
        raise ParamsError("The block construction needs a table with 0 and 1")
    entries = np.full((p.total, p.total), table.zero)
    start = 0
    for a in p.parts:
        for i in range(a):
            entries[start + i, start + (i + 1) % a] = table.one
        start += a
    for i in range(start, p.total):
        entries[i, i] = table.one
    return MatrixSR(table, entries)


def _upper_block_mask(p: Partition) -> np.ndarray:
    owner = np.repeat(np.arange(len(p.blocks())), p.blocks())
    return owner[None, :] > owner[:, None]


def randomize_upper_blocks(A: MatrixSR, p: Partition, density: float, rng: np.random.Generator) -> MatrixSR:
    """Entries strictly above the block diagonal become random nonzero elements with probability density."""
    if A.dim != p.total:
        raise ParamsError(f"shape mismatch: matrix is {A.dim}x{A.dim}, partition covers {p.total}")
    if not 0 <= density <= 1:
        raise ParamsError(f"Density {density} outside [0, 1]")

    table = A.table
    nonzero = np.array([x for x in range(table.size) if x != table.zero])
    if len(nonzero) == 0:
        raise ParamsError("The semiring has no nonzero element to place above the diagonal")
    hits = (rng.random((A.dim, A.dim)) < density) & _upper_block_mask(p)
    draws = nonzero[rng.integers(0, len(nonzero), size=(A.dim, A.dim))]
    return MatrixSR(table, np.where(hits, draws, A.entries))


def random_generalized_permutation(dim: int, table: SemiringTable, rng: np.random.Generator) -> GeneralizedPermutation:
    units = sorted(inverses(table))
    if not units:
        raise ParamsError("Table has no invertible element")
    perm = tuple(int(x) for x in rng.permutation(dim))
    picks = tuple(units[int(i)] for i in rng.integers(0, len(units), size=dim))
    return GeneralizedPermutation(table, perm, picks)


def build_public_matrix(
    total: int,
    table: SemiringTable,
    density: float,
    rng: np.random.Generator,
    seed: int | None = None,
    cap: int = DEFAULT_ORDER_CAP,
    P: GeneralizedPermutation | None = None,
) -> tuple[MatrixSR, dict]:
    partition = best_partition(total)
    base = base_block_matrix(partition, table)
    shaped = randomize_upper_blocks(base, partition, density, rng)
    if P is None:
        P = random_generalized_permutation(total, table, rng)
    M = conjugate(shaped, P)

    profile = order_profile(M, cap=cap)
    if profile.exact:
        if profile.distinct_powers < partition.lcm:
            raise ParamsError(f"Matrix has {profile.distinct_powers} distinct powers, below lcm {partition.lcm}")
        order = {"exact": True, "distinct_powers": profile.distinct_powers, "lower_bound": profile.distinct_powers}
    else:
        order = {"exact": False, "distinct_powers": None, "lower_bound": max(partition.lcm, profile.lower_bound)}
    log.info("Public matrix from partition %s: %s", list(partition.parts), order)

    provenance = {
        "seed": seed,
        "table_digest": table_digest(table).hex(),
        "partition": partition.as_dict(),
        "density": density,
        "permutation": {"perm": list(P.perm), "units": [table.names[u] for u in P.units]},
        "order": order,
        "polynomials": [],
    }
    return M, provenance


def evaluate_polynomial(coeffs, M: MatrixSR) -> MatrixSR:
    """
    sum_d coeffs[d] * M^d, lowest degree first. Horner over the nonzero terms,
    with mat_pow bridging the gap between consecutive degrees.
    """
    table = M.table
    terms = [(d, c) for d, c in enumerate(coeffs) if c != table.zero]
    if not terms:
        raise ParamsError("Polynomial has no nonzero coefficient")
    terms.reverse()

    top, c = terms[0]
    acc = scalar(table, c, M.dim)
    previous = top
    for d, c in terms[1:]:
        acc = mat_add(mat_mul(acc, mat_pow(M, previous - d)), scalar(table, c, M.dim))
        previous = d
    if previous:
        acc = mat_mul(acc, mat_pow(M, previous))
    return acc


def build_commuting_vector(
    M: MatrixSR,
    n: int,
    max_degree: int,
    rng: np.random.Generator,
    polynomials: list[list[int]] | None = None,
) -> tuple[CommutingVector, list[list[int]]]:
    """
    v[i] = p_i(M) for polynomials with central coefficients. Random polynomials
    carry at least two nonzero terms so that no v[i] is a pure power of M.
    """
    table = M.table
    if max_degree < 1:
        raise ParamsError(f"max_degree must be at least 1, got {max_degree}")
    coefficients = sorted(center(table))
    if not any(c != table.zero for c in coefficients):
        raise ParamsError("Center is {0}: no nonzero polynomial can be formed")

    if polynomials is None:
        polynomials = []
        for _ in range(n):
            while True:
                coeffs = [coefficients[int(i)] for i in rng.integers(0, len(coefficients), size=max_degree + 1)]
                if sum(c != table.zero for c in coeffs) >= 2:
                    break
            polynomials.append(coeffs)
    elif len(polynomials) != n:
        raise ParamsError(f"Expected {n} polynomials, got {len(polynomials)}")

    v = CommutingVector(evaluate_polynomial(coeffs, M) for coeffs in polynomials)
    v.check_commuting()
    if not all(mat_mul(M, x) == mat_mul(x, M) for x in v):
        raise ParamsError("Commuting vector entry does not commute with M")
    return v, polynomials


@dataclass(frozen=True)
class PublicParams:
    table: SemiringTable
    M: MatrixSR
    v: CommutingVector
    entry_bound: int

    def __post_init__(self):
        if self.v.dim != self.M.dim:
            raise ParamsError(f"Vector dimension {self.v.dim} differs from M's {self.M.dim}")
        if not 1 <= self.entry_bound <= MAX_ENTRY:
            raise ParamsError(f"Entry bound {self.entry_bound} outside [1, 2^64)")

    @property
    def dim(self) -> int:
        return self.M.dim

    @property
    def n(self) -> int:
        return self.v.n


def validate_provenance(record: dict) -> None:
    """On success, returns None. On failure, throws."""
    schema_file = dir_path / "schema" / "provenance.schema.json"
    with schema_file.open("rb") as f:
        schema = json.load(f)
    try:
        validate(instance=record, schema=schema)
    except ValidationError as e:
        raise ParamsError(f"Invalid provenance record: {e.message}") from e


def generate_params(
    table: SemiringTable,
    total: int,
    n: int,
    max_degree: int,
    entry_bound: int,
    density: float = 0.25,
    seed: int | None = None,
    cap: int = DEFAULT_ORDER_CAP,
) -> tuple[PublicParams, dict]:
    if n < 1:
        raise ParamsError(f"Vector length n must be positive, got {n}")
    rng = np.random.default_rng(seed)
    M, provenance = build_public_matrix(total, table, density, rng, seed=seed, cap=cap)
    v, polynomials = build_commuting_vector(M, n, max_degree, rng)
    provenance["polynomials"] = [[table.names[c] for c in coeffs] for coeffs in polynomials]
    validate_provenance(provenance)
    return PublicParams(table, M, v, entry_bound), provenance


def encode_params(params: PublicParams) -> bytes:
    out = [
        PARAMS_MAGIC,
        bytes([PARAMS_VERSION]),
        table_digest(params.table),
        struct.pack(">HHQ", params.dim, params.n, params.entry_bound),
        encode_matrix(params.M),
    ]
    out.extend(encode_matrix(x) for x in params.v)
    return b"".join(out)


def decode_params(data: bytes, table: SemiringTable) -> PublicParams:
    header = len(PARAMS_MAGIC) + 1 + 32 + 12
    if len(data) < header:
        raise ParamsError("Truncated parameter file")
    if data[:4] != PARAMS_MAGIC:
        raise ParamsError(f"Bad magic {data[:4]!r}, expected {PARAMS_MAGIC!r}")
    if data[4] != PARAMS_VERSION:
        raise ParamsError(f"Unsupported parameter file version {data[4]}")
    if data[5:37] != table_digest(table):
        raise ParamsError("Parameter file was generated over a different semiring table")
    dim, n, entry_bound = struct.unpack_from(">HHQ", data, 37)
    if n == 0:
        raise ParamsError("Parameter file declares an empty commuting vector")

    try:
        M, offset = decode_matrix(data, table, header)
        mats = []
        for _ in range(n):
            X, offset = decode_matrix(data, table, offset)
            mats.append(X)
    except MatrixError as e:
        raise ParamsError(f"Corrupt parameter file: {e}") from e
    if offset != len(data):
        raise ParamsError(f"{len(data) - offset} trailing bytes after parameter file")
    if M.dim != dim or any(X.dim != dim for X in mats):
        raise ParamsError("Matrix dimensions disagree with the header")
    try:
        v = CommutingVector(mats)
        v.check_commuting()
    except CirculantError as e:
        raise ParamsError(f"Invalid commuting vector: {e}") from e
    if not all(commutes(M, X) for X in v):
        raise ParamsError("Vector entries do not commute with M")
    return PublicParams(table, M, v, entry_bound)


def params_digest(params: PublicParams) -> bytes:
    return hashlib.sha256(encode_params(params)).digest()
