__all__ = [
    "SemiringTable",
    "ValidationReport",
    "SpecialElements",
    "CongruencePartition",
    "CongruenceSimplicity",
    "MonicoProfile",
    "TableFormatError",
    "SemiringError",
    "load_table",
    "load_table_file",
    "dump_table",
    "table_digest",
    "add",
    "mul",
    "validate_axioms",
    "find_special_elements",
    "center",
    "inverses",
    "congruence_closure",
    "is_congruence_simple",
    "irreducibility_witness",
    "monico_profile",
]

# Standard Library
import hashlib
import logging
import struct
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

# Dependencies
import numpy as np
from networkx.utils import UnionFind
from sympy import isprime

# Internal
from settings import SemikexError


log = logging.getLogger(__name__)

MAX_SIZE = 256


class TableFormatError(SemikexError):
    pass


class SemiringError(SemikexError):
    pass


class SemiringTable:
    """
    A finite semiring given by its addition and multiplication tables.

    Elements are the dense ids 0..size-1, names are only kept for I/O. The two
    tables are read-only uint8 arrays, add[x, y] = x + y and mul[x, y] = x * y.
    """

    def __init__(self, names: list[str], add_table, mul_table, zero: int | None = None, one: int | None = None):
        size = len(names)
        if size == 0:
            raise TableFormatError("A semiring needs at least one element")
        if size > MAX_SIZE:
            raise TableFormatError(f"Table has {size} elements, at most {MAX_SIZE} are supported")
        if len(set(names)) != size:
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise TableFormatError(f"duplicate names: {', '.join(dupes)}")

        self.names: tuple[str, ...] = tuple(names)
        self.add_table = self._freeze(add_table, size, "add")
        self.mul_table = self._freeze(mul_table, size, "mul")
        self._ids = {name: i for i, name in enumerate(self.names)}
        self._canonical: bytes | None = None

        detected_zero = self._detect_zero()
        detected_one = self._detect_one()
        if zero is not None and zero != detected_zero:
            raise TableFormatError(f"Declared zero '{self.names[zero]}' is not the additive neutral, multiplicatively absorbing element")
        if one is not None and one != detected_one:
            raise TableFormatError(f"Declared one '{self.names[one]}' is not a multiplicative identity")
        self.zero: int | None = detected_zero
        self.one: int | None = detected_one

    @staticmethod
    def _freeze(table, size: int, label: str) -> np.ndarray:
        arr = np.asarray(table)
        if arr.shape != (size, size):
            raise TableFormatError(f"non-square table: {label} has shape {arr.shape}, expected ({size}, {size})")
        if arr.size and (arr.min() < 0 or arr.max() >= size):
            raise TableFormatError(f"{label} table holds ids outside [0, {size})")
        arr = arr.astype(np.uint8)
        arr.setflags(write=False)
        return arr

    def _detect_zero(self) -> int | None:
        ids = np.arange(self.size)
        for z in range(self.size):
            if (np.array_equal(self.add_table[z], ids) and np.array_equal(self.add_table[:, z], ids)
                    and np.all(self.mul_table[z] == z) and np.all(self.mul_table[:, z] == z)):
                return z
        return None

    def _detect_one(self) -> int | None:
        ids = np.arange(self.size)
        for e in range(self.size):
            if np.array_equal(self.mul_table[e], ids) and np.array_equal(self.mul_table[:, e], ids):
                return e
        return None

    @property
    def size(self) -> int:
        return len(self.names)

    def id_of(self, name: str) -> int:
        try:
            return self._ids[name]
        except KeyError:
            raise TableFormatError(f"unknown element name '{name}'") from None

    def name_of(self, x: int) -> str:
        self.check_id(x)
        return self.names[x]

    def check_id(self, x: int) -> None:
        if not 0 <= int(x) < self.size:
            raise SemiringError(f"Element id {x} out of range for a table of size {self.size}")

    def canonical_bytes(self) -> bytes:
        if self._canonical is None:
            self._canonical = struct.pack(">H", self.size) + self.add_table.tobytes() + self.mul_table.tobytes()
        return self._canonical

    def __eq__(self, other) -> bool:
        if not isinstance(other, SemiringTable):
            return NotImplemented
        return self.names == other.names and self.canonical_bytes() == other.canonical_bytes()

    def __hash__(self) -> int:
        return hash(self.canonical_bytes())

    def __repr__(self) -> str:
        return f"SemiringTable(size={self.size}, names={' '.join(self.names)})"

    @classmethod
    def from_text(cls, text: str):
        return load_table(text, max_size)

    @classmethod
    def from_file(cls, path: str | Path):
        return load_table_file(path)


def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def load_table(text: str, max_size: int = MAX_SIZE) -> SemiringTable:
    """
    Parses the table file format:

        semiring <size>
        elements <name_0> ... <name_{size-1}>
        [zero <name>]
        [one <name>]
        add
        <size rows of size names>
        mul
        <size rows of size names>

    '#' starts a comment. Throws TableFormatError on anything malformed.
    """
    lines = [stripped for line in text.splitlines() if (stripped := _strip(line))]
    if not lines:
        raise TableFormatError("malformed header: empty table file")

    header = lines[0].split()
    if len(header) != 2 or header[0] != "semiring" or not header[1].isdigit():
        raise TableFormatError(f"malformed header: expected 'semiring <size>', got '{lines[0]}'")
    size = int(header[1])
    limit = min(max_size, MAX_SIZE)
    if size == 0 or size > limit:
        raise TableFormatError(f"malformed header: size {size} outside [1, {limit}]")

    if len(lines) < 2 or lines[1].split()[0] != "elements":
        raise TableFormatError("malformed header: missing 'elements' line")
    names = lines[1].split()[1:]
    if len(names) != size:
        raise TableFormatError(f"malformed header: {len(names)} element names for size {size}")
    if len(set(names)) != size:
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise TableFormatError(f"duplicate names: {', '.join(dupes)}")
    ids = {name: i for i, name in enumerate(names)}

    def lookup(name: str) -> int:
        if name not in ids:
            raise TableFormatError(f"unknown element name '{name}'")
        return ids[name]

    declared = {"zero": None, "one": None}
    cursor = 2
    while cursor < len(lines) and lines[cursor].split()[0] in declared:
        tokens = lines[cursor].split()
        if len(tokens) != 2:
            raise TableFormatError(f"malformed declaration '{lines[cursor]}'")
        declared[tokens[0]] = lookup(tokens[1])
        cursor += 1

    tables = {}
    for label in ("add", "mul"):
        if cursor >= len(lines) or lines[cursor] != label:
            raise TableFormatError(f"malformed header: expected '{label}' section")
        rows = lines[cursor + 1:cursor + 1 + size]
        if len(rows) != size:
            raise TableFormatError(f"non-square table: {label} has {len(rows)} rows, expected {size}")
        table = np.zeros((size, size), dtype=np.uint8)
        for x, row in enumerate(rows):
            cells = row.split()
            if len(cells) != size:
                raise TableFormatError(
                    f"non-square table: row '{names[x]}' of {label} has {len(cells)} entries, expected {size}"
                )
            table[x] = [lookup(cell) for cell in cells]
        tables[label] = table
        cursor += 1 + size

    if cursor != len(lines):
        raise TableFormatError(f"Unexpected trailing content: '{lines[cursor]}'")

    out = SemiringTable(names, tables["add"], tables["mul"], zero=declared["zero"], one=declared["one"])
    log.debug("Loaded %r (zero=%s, one=%s)", out, out.zero, out.one)
    return out


def load_table_file(path: str | Path, max_size: int = MAX_SIZE) -> SemiringTable:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise TableFormatError(f"Table file {path} not found") from e
    return load_table(text, max_size)


def dump_table(t: SemiringTable) -> str:
    width = max(len(name) for name in t.names)
    out = [f"semiring {t.size}", "elements " + " ".join(t.names)]
    for label, table in (("add", t.add_table), ("mul", t.mul_table)):
        out.append(label)
        for row in table:
            out.append(" ".join(t.names[y].rjust(width) for y in row))
    return "\n".join(out) + "\n"


def table_digest(t: SemiringTable) -> bytes:
    return hashlib.sha256(t.canonical_bytes()).digest()


def add(t: SemiringTable, x: int, y: int) -> int:
    t.check_id(x)
    t.check_id(y)
    return int(t.add_table[x, y])


def mul(t: SemiringTable, x: int, y: int) -> int:
    t.check_id(x)
    t.check_id(y)
    return int(t.mul_table[x, y])


@dataclass
class ValidationReport:
    violations: dict[str, list[tuple[int, int, int]]]
    add_commutative: bool
    mul_commutative: bool
    add_idempotent: bool

    @property
    def valid(self) -> bool:
        return not any(self.violations.values())

    def summary(self) -> str:
        if self.valid:
            return "ok"
        broken = [f"{law} ({len(triples)})" for law, triples in self.violations.items() if triples]
        return "violated: " + ", ".join(broken)


def validate_axioms(t: SemiringTable) -> ValidationReport:
    """
    Exhaustive check of both associativities and both distributivities over all
    size^3 triples. Each entry of the report is indexed (a, b, c).
    """
    A, M = t.add_table, t.mul_table
    idx = np.arange(t.size)
    a = idx[:, None, None]
    c = idx[None, None, :]
    b_c_sum = A[None, :, :]      # b + c at [_, b, c]
    b_c_prod = M[None, :, :]
    MT = M.T                     # MT[a, b] = b * a

    laws = {
        "add_associative": (A[A[:, :, None], c], A[a, b_c_sum]),
        "mul_associative": (M[M[:, :, None], c], M[a, b_c_prod]),
        "left_distributive": (M[a, b_c_sum], A[M[:, :, None], M[:, None, :]]),
        "right_distributive": (M[b_c_sum, a], A[MT[:, :, None], MT[:, None, :]]),
    }
    violations = {
        law: [tuple(int(v) for v in triple) for triple in np.argwhere(lhs != rhs)]
        for law, (lhs, rhs) in laws.items()
    }

    return ValidationReport(
        violations=violations,
        add_commutative=bool(np.array_equal(A, A.T)),
        mul_commutative=bool(np.array_equal(M, M.T)),
        add_idempotent=bool(np.array_equal(np.diagonal(A), idx)),
    )


@dataclass(frozen=True)
class SpecialElements:
    additive_neutral: int | None
    multiplicative_identity: int | None
    multiplicative_absorbing: int | None
    additive_absorbing: int | None


def _absorbing(table: np.ndarray) -> int | None:
    for x in range(table.shape[0]):
        if np.all(table[x] == x) and np.all(table[:, x] == x):
            return x
    return None


def find_special_elements(t: SemiringTable) -> SpecialElements:
    ids = np.arange(t.size)
    neutral = next(
        (e for e in range(t.size) if np.array_equal(t.add_table[e], ids) and np.array_equal(t.add_table[:, e], ids)),
        None
    )
    return SpecialElements(
        additive_neutral=neutral,
        multiplicative_identity=t.one,
        multiplicative_absorbing=_absorbing(t.mul_table),
        additive_absorbing=_absorbing(t.add_table),
    )


def center(t: SemiringTable) -> frozenset[int]:
    M = t.mul_table
    return frozenset(r for r in range(t.size) if np.array_equal(M[r], M[:, r]))


def inverses(t: SemiringTable) -> dict[int, int]:
    """Maps every multiplicatively invertible element to its two-sided inverse."""
    if t.one is None:
        return {}
    M = t.mul_table
    out = {}
    for x in range(t.size):
        for y in np.flatnonzero(M[x] == t.one):
            if M[y, x] == t.one:
                out[x] = int(y)
                break
    return out


@dataclass(frozen=True)
class CongruencePartition:
    blocks: tuple[frozenset[int], ...]

    @classmethod
    def from_sets(cls, sets) -> "CongruencePartition":
        return cls(tuple(sorted((frozenset(int(x) for x in s) for s in sets), key=min)))

    def block_of(self, x: int) -> frozenset[int]:
        for block in self.blocks:
            if x in block:
                return block
        raise SemiringError(f"Element {x} not covered by the partition")

    def same(self, x: int, y: int) -> bool:
        return y in self.block_of(x)

    @property
    def is_discrete(self) -> bool:
        return all(len(block) == 1 for block in self.blocks)

    @property
    def is_full(self) -> bool:
        return len(self.blocks) == 1

    def refines(self, other: "CongruencePartition") -> bool:
        """True when every block of self sits inside a block of other."""
        return all(any(block <= big for big in other.blocks) for block in self.blocks)

    def render(self, t: SemiringTable) -> str:
        return " | ".join("{" + ",".join(t.names[x] for x in sorted(block)) + "}" for block in self.blocks)


def congruence_closure(t: SemiringTable, seed_pairs) -> CongruencePartition:
    """
    Smallest congruence containing seed_pairs, by union-find saturation.

    Every pair that actually merges two classes pushes its four translates
    (x+c, y+c), (c+x, c+y), (x*c, y*c), (c*x, c*y) for each c.
    """
    A, M = t.add_table, t.mul_table
    uf = UnionFind(range(t.size))
    work = deque()
    for x, y in seed_pairs:
        t.check_id(x)
        t.check_id(y)
        work.append((int(x), int(y)))

    while work:
        x, y = work.popleft()
        if uf[x] == uf[y]:
            continue
        uf.union(x, y)
        work.extend(zip(A[x].tolist(), A[y].tolist()))
        work.extend(zip(A[:, x].tolist(), A[:, y].tolist()))
        work.extend(zip(M[x].tolist(), M[y].tolist()))
        work.extend(zip(M[:, x].tolist(), M[:, y].tolist()))

    return CongruencePartition.from_sets(uf.to_sets())


@dataclass(frozen=True)
class CongruenceSimplicity:
    simple: bool
    pair: tuple[int, int] | None = None
    congruence: CongruencePartition | None = None

    def __bool__(self) -> bool:
        return self.simple


def is_congruence_simple(t: SemiringTable) -> CongruenceSimplicity:
    if t.size < 2:
        raise SemiringError("Congruence-simplicity is only defined for tables with at least 2 elements")

    for a in range(t.size):
        for b in range(a + 1, t.size):
            closure = congruence_closure(t, [(a, b)])
            if not closure.is_full:
                log.debug("Pair (%s, %s) generates a proper congruence %s", t.names[a], t.names[b], closure.render(t))
                return CongruenceSimplicity(False, (a, b), closure)
    return CongruenceSimplicity(True)


def irreducibility_witness(t: SemiringTable) -> int | None:
    """
    Finds x with x + y = y + x = x for all y and such that z + y = x forces z = x
    or y = x. Any such x certifies that (R, +) is irreducible.
    """
    A = t.add_table
    for x in range(t.size):
        if not (np.all(A[x] == x) and np.all(A[:, x] == x)):
            continue
        sums = np.argwhere(A == x)
        if np.all((sums[:, 0] == x) | (sums[:, 1] == x)):
            return x
    return None


@dataclass(frozen=True)
class MonicoProfile:
    additively_commutative: bool
    at_most_two: bool
    zero_multiplication_prime_ring: bool
    additively_idempotent: bool
    absorbing_infinity: int | None
    matrix_ring: str = field(default="not tested")

    @property
    def candidate_cases(self) -> list[int]:
        cases = []
        if self.at_most_two:
            cases.append(1)
        if self.zero_multiplication_prime_ring:
            cases.append(3)
        if self.additively_idempotent:
            cases.append(4)
        if self.absorbing_infinity is not None:
            cases.append(5)
        return cases


def monico_profile(t: SemiringTable) -> MonicoProfile:
    """Observable predicates of the classification of finite congruence-simple semirings."""
    A, M = t.add_table, t.mul_table
    report = validate_axioms(t)
    special = find_special_elements(t)

    zero_ring = False
    if special.additive_neutral is not None and isprime(t.size):
        z = special.additive_neutral
        every_has_negative = all(np.any(A[x] == z) for x in range(t.size))
        zero_ring = bool(np.all(M == z)) and every_has_negative

    infinity = special.multiplicative_absorbing
    if infinity is not None and not np.all(A == infinity):
        infinity = None

    return MonicoProfile(
        additively_commutative=report.add_commutative,
        at_most_two=t.size <= 2,
        zero_multiplication_prime_ring=zero_ring,
        additively_idempotent=report.add_idempotent,
        absorbing_infinity=infinity,
    )
