__all__ = [
    "AttackReport",
    "UniquenessReport",
    "brute_force_attack",
    "pkey_census",
    "random_attack",
    "uniqueness_experiment",
    "render_text",
    "render_kv",
    "render_json",
    "render_csv",
]

# Standard Library
import csv
import io
import itertools
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

# Dependencies
import numpy as np
from tqdm import tqdm

# Internal
from settings import SemikexError, attack_budget, dir_path
from semiring import table_digest
from matrix_semiring import (
    MatrixSR, BudgetExceeded, DEFAULT_ORDER_CAP, identity, mat_mul, mat_pow, order_profile, power_sequence, render_matrix,
)
from circulant import CirculantNat, CommutingVector, circ_act, circ_det_int, circ_random
from paramgen import PublicParams
from kex import PublicKeyMsg


log = logging.getLogger(__name__)

COUNTEREXAMPLE_DIR = dir_path / "sr_vault" / "counterexamples"

# Above this many powers per coordinate, powers are computed on demand instead of tabulated
POWER_TABLE_LIMIT = 4096
DRAW_ATTEMPTS = 1000


@dataclass
class AttackReport:
    kind: str
    n: int
    bound: int
    tried: int = 0
    successes: int = 0
    first_success: CirculantNat | None = None
    wall_time: float = 0.0
    pkey_size: int | None = None
    hits: list[CirculantNat] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.successes > self.tried:
            raise SemikexError(f"Report claims {self.successes} successes out of {self.tried} tries")

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "bound": self.bound,
            "tried": self.tried,
            "successes": self.successes,
            "first_success": list(self.first_success.c) if self.first_success else None,
            "wall_time": round(self.wall_time, 6),
            "pkey_size": self.pkey_size,
        }


@dataclass
class UniquenessReport:
    mode: str
    trials: int
    distinct_powers: int
    exponents: tuple[int, ...]
    box: int
    counterexamples: list[dict] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def unique(self) -> bool:
        return not self.counterexamples

    def as_dict(self) -> dict:
        return {
            "kind": f"uniqueness-{self.mode}",
            "trials": self.trials,
            "distinct_powers": self.distinct_powers,
            "exponents": list(self.exponents),
            "box": self.box,
            "unique": self.unique,
            "counterexamples": len(self.counterexamples),
            "wall_time": round(self.wall_time, 6),
        }


class _PowerCache:
    """v[j] ** e for every coordinate j, tabulated when the box is small."""

    def __init__(self, v: CommutingVector, bound: int, include_zero: bool):
        self.v = v
        self.one = identity(v.table, v.dim) if include_zero else None
        self.tables = None
        if bound < POWER_TABLE_LIMIT:
            self.tables = [[self.one] + power_sequence(x, bound) for x in v]

    def get(self, j: int, e: int) -> MatrixSR:
        if self.tables is not None:
            return self.tables[j][e]
        return mat_pow(self.v[j], e)


def _acts_to(c: tuple[int, ...], powers: _PowerCache, target: CommutingVector) -> bool:
    """circ_act(Circ(c), v) == target, bailing out at the first differing coordinate."""
    n = len(c)
    for i in range(n):
        acc = None
        for j in range(n):
            e = c[(i - j) % n]
            if e:
                acc = powers.get(j, e) if acc is None else mat_mul(acc, powers.get(j, e))
        if acc is None:
            acc = powers.one
        if acc != target[i]:
            return False
    return True


def _check_budget(bound: int, n: int, budget: int | None) -> int:
    total = (bound + 1) ** n
    if budget is None:
        budget = attack_budget()
    if total > budget:
        raise BudgetExceeded(f"budget exceeded: (bound+1)^n = {total} candidates, budget is {budget}")
    return total


def _enumerate(
    v: CommutingVector,
    target: CommutingVector,
    bound: int,
    include_zero: bool = False,
    accept=None,
    workers: int = 1,
    progress: bool = False,
) -> tuple[int, list[tuple[int, ...]]]:
    """
    Lexicographic sweep of [0, bound]^n. The range is split into one contiguous
    slice per worker and the slices' hits are concatenated in order.
    """
    n = v.n
    total = (bound + 1) ** n
    powers = _PowerCache(v, bound, include_zero)

    bar = tqdm(total=total, desc="candidates", unit="C", disable=not progress, leave=False)

    def sweep(start: int, stop: int) -> tuple[int, list[tuple[int, ...]]]:
        tried = 0
        found = []
        for c in itertools.islice(itertools.product(range(bound + 1), repeat=n), start, stop):
            bar.update(1)
            if not any(c) and not include_zero:
                continue
            if accept is not None and not accept(c):
                continue
            tried += 1
            if _acts_to(c, powers, target):
                found.append(c)
        return tried, found

    workers = max(1, min(workers, total))
    cuts = [total * k // workers for k in range(workers + 1)]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        results = list(executor.map(sweep, cuts[:-1], cuts[1:]))
    bar.close()

    tried = sum(r[0] for r in results)
    hits = [c for r in results for c in r[1]]
    return tried, hits


def brute_force_attack(
    params: PublicParams,
    pk: PublicKeyMsg,
    bound: int,
    budget: int | None = None,
    workers: int = 1,
    progress: bool = False,
) -> AttackReport:
    """
    Every nonzero C in Circ_n([0, bound]) with C v = pk, in lexicographic order.
    The all-zero circulant is never a key and is not tried.
    """
    _check_budget(bound, params.n, budget)
    start = time.perf_counter()
    tried, hits = _enumerate(params.v, pk.vec, bound, workers=workers, progress=progress)
    elapsed = time.perf_counter() - start

    keys = [CirculantNat(c) for c in hits]
    for C in keys:
        if circ_act(C, params.v) != pk.vec:
            raise SemikexError(f"Enumeration reported {C} but it does not reproduce the public key")

    log.info("Brute force over %d candidates: %d hits in %.3fs", tried, len(keys), elapsed)
    return AttackReport(
        kind="brute",
        n=params.n,
        bound=bound,
        tried=tried,
        successes=len(keys),
        first_success=keys[0] if keys else None,
        wall_time=elapsed,
        pkey_size=len(keys),
        hits=keys,
    )


def pkey_census(params: PublicParams, pk: PublicKeyMsg, bound: int, budget: int | None = None) -> list[CirculantNat]:
    return brute_force_attack(params, pk, bound, budget=budget).hits


def random_attack(
    params: PublicParams,
    pk: PublicKeyMsg,
    bound: int,
    trials: int,
    rng: np.random.Generator,
    progress: bool = False,
) -> AttackReport:
    report = AttackReport(kind="random", n=params.n, bound=bound)
    start = time.perf_counter()
    for _ in tqdm(range(trials), desc="random attack", disable=not progress, leave=False):
        C = circ_random(params.n, bound, rng)
        report.tried += 1
        if circ_act(C, params.v) == pk.vec:
            report.successes += 1
            if report.first_success is None:
                report.first_success = C
    report.wall_time = time.perf_counter() - start
    return report


def _exponents_of(base: MatrixSR, v: CommutingVector, distinct: int) -> tuple[int, ...]:
    """b with v = (base^b_0, ..., base^b_{n-1}); exponents are read off the power sequence."""
    lookup = {}
    for e, X in enumerate(power_sequence(base, distinct), start=1):
        lookup.setdefault(X, e)
    exponents = []
    for X in v:
        if X not in lookup:
            raise SemikexError("hypothesis unsatisfiable: v is not a monomial vector in M")
        exponents.append(lookup[X])
    return tuple(exponents)


def _action_exponents(a: tuple[int, ...], b: tuple[int, ...]) -> list[int]:
    """Exponent of M in coordinate i of Circ(a) acting on (M^b_j): sum_j b_j a_{(i-j) mod n}."""
    n = len(a)
    return [sum(b[j] * a[(i - j) % n] for j in range(n)) for i in range(n)]


def _write_counterexample(directory: Path, record: dict, index: int) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"counterexample_{record['mode']}_{index:04d}.json"
    with path.open("w") as f:
        json.dump(record, f, indent=2)
    log.warning("Uniqueness counterexample written to %s", path)
    return path


def uniqueness_experiment(
    params: PublicParams,
    mode: str,
    trials: int,
    rng: np.random.Generator,
    private: CirculantNat | None = None,
    box: int | None = None,
    budget: int | None = None,
    fixtures_dir: str | Path | None = None,
    progress: bool = False,
    cap: int = DEFAULT_ORDER_CAP,
) -> UniquenessReport:
    """
    Tests that X v = A v forces X = A for A inside the uniqueness hypothesis.

    n1: n = 1 and the single v[0] is the base. general: v = (M^b_i) with
    det Circ(b) != 0, and every coordinate exponent of the action stays below
    distinct_powers(M). Each trial draws A under the hypothesis (or uses the
    given private circulant) and enumerates the hypothesis box. Passing box
    explicitly enumerates [0, box]^n without filtering, which is how the
    hypothesis is violated on purpose. Counterexamples are written as JSON
    into fixtures_dir, COUNTEREXAMPLE_DIR when not given.
    """
    if mode == "n1":
        if params.n != 1:
            raise SemikexError(f"hypothesis unsatisfiable: mode n1 needs n = 1, params have n = {params.n}")
        base = params.v[0]
    elif mode == "general":
        base = params.M
    else:
        raise SemikexError(f"Unknown uniqueness mode '{mode}'")

    profile = order_profile(base, cap=cap)
    if not profile.exact:
        raise SemikexError("hypothesis unsatisfiable: distinct powers of the base exceed the cycle-detection cap")
    d = profile.distinct_powers
    b = (1,) if mode == "n1" else _exponents_of(base, params.v, d)
    if circ_det_int(CirculantNat(b)) == 0:
        raise SemikexError(f"hypothesis unsatisfiable: det Circ{b} = 0")

    def in_hypothesis(a) -> bool:
        return all(e <= d - 1 for e in _action_exponents(a, b))

    side = (d - 1) // max(b)
    filtered = box is None
    if box is None:
        box = side
    if box < 1 and private is None:
        raise SemikexError(f"hypothesis unsatisfiable: no nonzero key fits below {d} distinct powers")
    _check_budget(box, params.n, budget)

    report = UniquenessReport(mode=mode, trials=trials, distinct_powers=d, exponents=b, box=box)
    start = time.perf_counter()
    for trial in tqdm(range(trials), desc=f"uniqueness {mode}", disable=not progress, leave=False):
        if private is not None:
            a = private.c
        else:
            for _ in range(DRAW_ATTEMPTS):
                a = tuple(int(x) for x in rng.integers(0, side, size=params.n, endpoint=True))
                if any(a) and in_hypothesis(a):
                    break
            else:
                raise SemikexError("hypothesis unsatisfiable: no private circulant drawn under the hypothesis")

        target = circ_act(CirculantNat(a), params.v)
        _, solutions = _enumerate(
            params.v, target, box, include_zero=True, accept=in_hypothesis if filtered else None
        )
        if solutions != [a]:
            record = {
                "mode": mode,
                "trial": trial,
                "table_digest": table_digest(params.table).hex(),
                "base": render_matrix(base).splitlines(),
                "exponents": list(b),
                "distinct_powers": d,
                "box": box,
                "private": list(a),
                "solutions": [list(s) for s in solutions],
            }
            report.counterexamples.append(record)
            _write_counterexample(Path(fixtures_dir or COUNTEREXAMPLE_DIR), record, trial)
    report.wall_time = time.perf_counter() - start

    log.info("Uniqueness %s: %d trials, %d counterexamples", mode, trials, len(report.counterexamples))
    return report


def render_text(report: AttackReport | UniquenessReport) -> str:
    return "\n".join(f"{key.replace('_', ' ')}: {value}" for key, value in report.as_dict().items() if value is not None)


def render_kv(report: AttackReport | UniquenessReport) -> str:
    def flat(value) -> str:
        if value is None:
            return ""
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, list):
            return ",".join(str(x) for x in value)
        return str(value)

    return "\n".join(f"{key}={flat(value)}" for key, value in report.as_dict().items())


def render_json(report: AttackReport | UniquenessReport) -> str:
    return json.dumps(report.as_dict(), indent=2)


def render_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ",".join(map(str, v)) if isinstance(v, list) else v for k, v in row.items()})
    return out.getvalue()
