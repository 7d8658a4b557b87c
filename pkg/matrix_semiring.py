__all__ = [
    "MatrixSR",
    "GeneralizedPermutation",
    "OrderProfile",
    "MatrixError",
    "BudgetExceeded",
    "identity",
    "zero_matrix",
    "scalar",
    "parse_matrix",
    "render_matrix",
    "encode_matrix",
    "decode_matrix",
    "mat_add",
    "mat_mul",
    "mat_pow",
    "power_sequence",
    "order_profile",
    "is_generalized_permutation",
    "gp_to_matrix",
    "gp_inverse",
    "conjugate",
    "commutes",
    "invertibility_oracle",
]

# Standard Library
import itertools
import logging
import struct
from dataclasses import dataclass

# Dependencies
import numpy as np

# Internal
from settings import SemikexError
from semiring import SemiringTable, inverses


log = logging.getLogger(__name__)

DEFAULT_ORDER_CAP = 1_000_000
DEFAULT_SEARCH_BUDGET = 20 ** 4
MAX_EXPONENT = 2 ** 64 - 1


class MatrixError(SemikexError):
    pass


class BudgetExceeded(SemikexError):
    pass


class MatrixSR:
    """
    A square matrix over a SemiringTable. Entries are element ids in a
    read-only (dim, dim) uint8 array, so instances behave as values.
    """

    __slots__ = ("table", "entries", "_hash")

    def __init__(self, table: SemiringTable, entries):
        arr = np.array(entries, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
            raise MatrixError(f"Matrix entries must form a non-empty square, got shape {arr.shape}")
        if arr.min() < 0 or arr.max() >= table.size:
            raise MatrixError(f"Matrix holds ids outside [0, {table.size})")
        arr = arr.astype(np.uint8)
        arr.setflags(write=False)
        self.table = table
        self.entries = arr
        self._hash = None

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __getitem__(self, ij) -> int:
        return int(self.entries[ij])

    def __eq__(self, other) -> bool:
        if not isinstance(other, MatrixSR):
            return NotImplemented
        # A hash mismatch settles most comparisons without touching the entries
        if hash(self) != hash(other):
            return False
        return (self.table is other.table or self.table == other.table) and np.array_equal(self.entries, other.entries)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.dim, self.entries.tobytes()))
        return self._hash

    def __add__(self, other):
        return mat_add(self, other)

    def __matmul__(self, other):
        return mat_mul(self, other)

    def __pow__(self, k: int):
        return mat_pow(self, k)

    def __repr__(self) -> str:
        return f"MatrixSR(dim={self.dim})\n{render_matrix(self)}"


def _require_unit(table: SemiringTable) -> None:
    if table.zero is None or table.one is None:
        raise MatrixError("Identity-shaped matrices need a table with both 0 and 1")


def identity(table: SemiringTable, dim: int) -> MatrixSR:
    _require_unit(table)
    entries = np.full((dim, dim), table.zero)
    np.fill_diagonal(entries, table.one)
    return MatrixSR(table, entries)


def zero_matrix(table: SemiringTable, dim: int) -> MatrixSR:
    if table.zero is None:
        raise MatrixError("Table has no zero element")
    return MatrixSR(table, np.full((dim, dim), table.zero))


def scalar(table: SemiringTable, c: int, dim: int) -> MatrixSR:
    """c * I"""
    _require_unit(table)
    table.check_id(c)
    entries = np.full((dim, dim), table.zero)
    np.fill_diagonal(entries, c)
    return MatrixSR(table, entries)


def parse_matrix(text: str, table: SemiringTable) -> MatrixSR:
    """One row per line, element names separated by whitespace. '#' starts a comment."""
    rows = [line.split("#", 1)[0].split() for line in text.splitlines()]
    rows = [row for row in rows if row]
    if any(len(row) != len(rows) for row in rows):
        raise MatrixError(f"Matrix text is not square: row lengths {[len(r) for r in rows]}")
    return MatrixSR(table, [[table.id_of(name) for name in row] for row in rows])


def render_matrix(A: MatrixSR) -> str:
    names = A.table.names
    width = max(len(n) for n in names)
    return "\n".join(" ".join(names[x].rjust(width) for x in row) for row in A.entries)


def encode_matrix(A: MatrixSR) -> bytes:
    return struct.pack(">H", A.dim) + A.entries.tobytes()


def decode_matrix(data: bytes, table: SemiringTable, offset: int = 0) -> tuple[MatrixSR, int]:
    """Returns the matrix and the offset just past it."""
    if len(data) - offset < 2:
        raise MatrixError("Truncated matrix: missing dimension")
    (dim,) = struct.unpack_from(">H", data, offset)
    offset += 2
    end = offset + dim * dim
    if dim == 0 or end > len(data):
        raise MatrixError(f"Truncated matrix: dim {dim} needs {dim * dim} entry bytes")
    raw = np.frombuffer(data, dtype=np.uint8, count=dim * dim, offset=offset).reshape(dim, dim)
    if raw.max() >= table.size:
        raise MatrixError(f"Matrix holds ids outside [0, {table.size})")
    return MatrixSR(table, raw), end


def _check_pair(A: MatrixSR, B: MatrixSR) -> None:
    if A.dim != B.dim:
        raise MatrixError(f"Dimension mismatch: {A.dim} vs {B.dim}")
    if A.table is not B.table and A.table != B.table:
        raise MatrixError("Matrices are over different semirings")


def mat_add(A: MatrixSR, B: MatrixSR) -> MatrixSR:
    _check_pair(A, B)
    return MatrixSR(A.table, A.table.add_table[A.entries, B.entries])


def mat_mul(A: MatrixSR, B: MatrixSR) -> MatrixSR:
    _check_pair(A, B)
    # products[i, k, j] = A[i, k] * B[k, j]
    products = A.table.mul_table[A.entries[:, :, None], B.entries[None, :, :]]
    add_table = A.table.add_table
    acc = products[:, 0, :]
    for k in range(1, A.dim):
        acc = add_table[acc, products[:, k, :]]
    return MatrixSR(A.table, acc)


def mat_pow(A: MatrixSR, k: int) -> MatrixSR:
    if not 0 <= k <= MAX_EXPONENT:
        raise MatrixError(f"Exponent {k} outside the 64-bit range")
    if k == 0:
        return identity(A.table, A.dim)

    result = None
    base = A
    while k:
        if k & 1:
            result = base if result is None else mat_mul(result, base)
        k >>= 1
        if k:
            base = mat_mul(base, base)
    return result


def power_sequence(A: MatrixSR, count: int) -> list[MatrixSR]:
    """[A^1, ..., A^count] by repeated multiplication."""
    out = [A] if count > 0 else []
    while len(out) < count:
        out.append(mat_mul(out[-1], A))
    return out


@dataclass(frozen=True)
class OrderProfile:
    """
    Tail and cycle of A, A^2, A^3, ...

    first_repeat is the least m with A^m equal to an earlier power, so it is
    distinct_powers + 1.
    When exact is False the cycle was not reached within the cap and only
    lower_bound (on distinct_powers) is known.
    """
    preperiod: int | None
    period: int | None
    exact: bool = True
    lower_bound: int = 1

    @property
    def distinct_powers(self) -> int | None:
        if not self.exact:
            return None
        return self.preperiod + self.period

    @property
    def first_repeat(self) -> int | None:
        if not self.exact:
            return None
        return self.distinct_powers + 1


def order_profile(A: MatrixSR, cap: int = DEFAULT_ORDER_CAP) -> OrderProfile:
    """Brent cycle detection on the power sequence starting at A^1."""
    def step(X):
        return mat_mul(X, A)

    power = lam = 1
    tortoise = A
    hare = step(A)
    steps = 1
    while tortoise != hare:
        if steps >= cap:
            # Brent detects any cycle within 4 * (preperiod + period) steps
            bound = steps // 4 + 1
            log.info("Order search stopped after %d multiplications, distinct powers >= %d", steps, bound)
            return OrderProfile(None, None, exact=False, lower_bound=bound)
        if power == lam:
            tortoise = hare
            power *= 2
            lam = 0
        hare = step(hare)
        lam += 1
        steps += 1

    tortoise = hare = A
    for _ in range(lam):
        hare = step(hare)
    mu = 0
    while tortoise != hare:
        tortoise = step(tortoise)
        hare = step(hare)
        mu += 1

    return OrderProfile(preperiod=mu, period=lam, lower_bound=mu + lam)


@dataclass(frozen=True)
class GeneralizedPermutation:
    """Row i holds units[i] in column perm[i] and zero elsewhere."""
    table: SemiringTable
    perm: tuple[int, ...]
    units: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.perm) != list(range(len(self.perm))):
            raise MatrixError(f"{self.perm} is not a permutation")
        if len(self.units) != len(self.perm):
            raise MatrixError("One unit per row is required")
        units = inverses(self.table)
        for u in self.units:
            if u not in units:
                raise MatrixError(f"Entry '{self.table.names[u]}' has no multiplicative inverse")

    @property
    def dim(self) -> int:
        return len(self.perm)


def is_generalized_permutation(A: MatrixSR) -> GeneralizedPermutation | None:
    _require_unit(A.table)
    nonzero = A.entries != A.table.zero
    if not (np.all(nonzero.sum(axis=1) == 1) and np.all(nonzero.sum(axis=0) == 1)):
        return None
    perm = tuple(int(np.flatnonzero(row)[0]) for row in nonzero)
    units = tuple(int(A.entries[i, j]) for i, j in enumerate(perm))
    invertible = inverses(A.table)
    if any(u not in invertible for u in units):
        return None
    return GeneralizedPermutation(A.table, perm, units)


def gp_to_matrix(P: GeneralizedPermutation) -> MatrixSR:
    entries = np.full((P.dim, P.dim), P.table.zero)
    entries[np.arange(P.dim), list(P.perm)] = P.units
    return MatrixSR(P.table, entries)


def gp_inverse(P: GeneralizedPermutation) -> GeneralizedPermutation:
    inv = inverses(P.table)
    perm = [0] * P.dim
    units = [0] * P.dim
    for i, (j, u) in enumerate(zip(P.perm, P.units)):
        perm[j] = i
        units[j] = inv[u]
    return GeneralizedPermutation(P.table, tuple(perm), tuple(units))


def conjugate(A: MatrixSR, P: GeneralizedPermutation) -> MatrixSR:
    """P A P^-1"""
    if A.dim != P.dim:
        raise MatrixError(f"Dimension mismatch: {A.dim} vs {P.dim}")
    return mat_mul(mat_mul(gp_to_matrix(P), A), gp_to_matrix(gp_inverse(P)))


def commutes(A: MatrixSR, B: MatrixSR) -> bool:
    return mat_mul(A, B) == mat_mul(B, A)


def _right_inverse_columns(A: MatrixSR, target: np.ndarray) -> list[np.ndarray]:
    """Every vector x with A x = target, from the full candidate space size^dim."""
    table = A.table
    candidates = np.array(list(itertools.product(range(table.size), repeat=A.dim)), dtype=np.uint8)
    # products[c, i, k] = A[i, k] * x_c[k]
    products = table.mul_table[A.entries[None, :, :], candidates[:, None, :]]
    acc = products[:, :, 0]
    for k in range(1, A.dim):
        acc = table.add_table[acc, products[:, :, k]]
    return list(candidates[np.all(acc == target[None, :], axis=1)])


def invertibility_oracle(A: MatrixSR, budget: int = DEFAULT_SEARCH_BUDGET) -> MatrixSR | None:
    """
    A two-sided inverse of A, or None.

    Generalized permutations get their closed form. Anything else is searched
    exhaustively, column by column: each column of an inverse must solve
    A x = e_j, and the combinations are then checked on the left.
    """
    if (P := is_generalized_permutation(A)) is not None:
        return gp_to_matrix(gp_inverse(P))

    candidates = A.table.size ** (A.dim * A.dim)
    if candidates > budget:
        raise BudgetExceeded(f"Inverse search over {candidates} candidates exceeds the budget of {budget}")

    eye = identity(A.table, A.dim)
    columns = [_right_inverse_columns(A, eye.entries[:, j]) for j in range(A.dim)]
    if any(len(c) == 0 for c in columns):
        return None
    for combo in itertools.product(*columns):
        X = MatrixSR(A.table, np.stack(combo, axis=1))
        if mat_mul(X, A) == eye:
            return X
    return None
