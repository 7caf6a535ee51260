"""Semantics: brute-force evaluation, counting evaluation of Hanf normal
forms, sphere histograms and a bounded equivalence oracle."""

from __future__ import annotations

import enum
import itertools
import random
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Mapping, Sequence

from .errors import BudgetExceeded, EvaluationError, HanfError, SignatureError
from .formulas import (
    And,
    EqAtom,
    Exists,
    FalseConst,
    Forall,
    Formula,
    HanfAtom,
    Not,
    Or,
    RelAtom,
    SphereAtom,
    TrueConst,
    free_variables,
)
from .hnf import HnfFormula
from .spheres import _extensions, sphere_code, structure_code
from .structure import Signature, Structure

Assignment = Mapping[str, int]

EXHAUSTIVE_SIZE_CAP = 4


def _check_assignment(A: Structure, asg: Assignment, needed: Sequence[str]):
    for v in needed:
        if v not in asg:
            raise EvaluationError(f"free variable {v!r} is unassigned")
        a = asg[v]
        if not (isinstance(a, int) and 0 <= a < A.size):
            raise EvaluationError(f"{v}={a!r} outside universe 0..{A.size - 1}")


_SHAPES: dict[int, tuple] = {}


def _shape(F: Formula) -> tuple[list[str], frozenset, frozenset]:
    """Free variables, relation uses and sphere signatures of ``F`` (cached)."""
    hit = _SHAPES.get(id(F))
    if hit is not None and hit[0] is F:
        return hit[1]
    rels, sigs = set(), set()
    for G in _atoms_of(F):
        if isinstance(G, RelAtom):
            rels.add((G.name, len(G.args)))
        else:
            sigs.add(G.sphere.signature)
    shape = (free_variables(F), frozenset(rels), frozenset(sigs))
    if len(_SHAPES) > 4096:
        _SHAPES.clear()
    _SHAPES[id(F)] = (F, shape)
    return shape


def _check_signature(A: Structure, F: Formula):
    sig = A.signature
    _, rels, sigs = _shape(F)
    for name, k in rels:
        if name not in sig or sig.arity(name) != k:
            raise SignatureError(f"{name}/{k} not in the structure's signature")
    if any(s != sig for s in sigs):
        raise SignatureError("sphere and structure use different signatures")


def _atoms_of(F: Formula):
    stack = [F]
    seen = set()
    while stack:
        G = stack.pop()
        if isinstance(G, RelAtom):
            yield G
        elif isinstance(G, (HanfAtom, SphereAtom)):
            if id(G) not in seen:
                seen.add(id(G))
                yield G
        elif isinstance(G, Not):
            stack.append(G.child)
        elif isinstance(G, (And, Or)):
            stack.extend(G.children)
        elif isinstance(G, (Exists, Forall)):
            stack.append(G.body)


class SphereCodes:
    """Per-structure cache of sphere codes, keyed by ``(radius, tuple)``."""

    def __init__(self, A: Structure):
        self.A = A
        self._codes: dict[tuple, bytes] = {}
        self._counts: dict[tuple, Counter] = {}

    def code(self, d: int, tup: tuple[int, ...]) -> bytes:
        key = (d, tup)
        c = self._codes.get(key)
        if c is None:
            c = self._codes[key] = sphere_code(self.A, tup, d)
        return c

    def witness_counts(self, d: int, prefix: tuple[int, ...]) -> Counter:
        """How many ``b`` give each code for the sphere around ``prefix + (b,)``."""
        key = (d, prefix)
        c = self._counts.get(key)
        if c is None:
            c = self._counts[key] = Counter(self.code(d, prefix + (b,)) for b in self.A.universe)
        return c


def eval_fo(A: Structure, asg: Assignment, F: Formula, *, codes: SphereCodes | None = None) -> bool:
    """Tarskian truth of ``F`` in ``A`` under ``asg``.

    Quantifiers range over the whole universe.  A Hanf atom counts the
    witnesses ``b`` whose extracted sphere is isomorphic to its pattern.
    """
    if isinstance(F, HnfFormula):
        F = F.formula
    _check_assignment(A, asg, _shape(F)[0])
    _check_signature(A, F)
    return _fo(A, dict(asg), F, codes or SphereCodes(A))


def _fo(A: Structure, env: dict[str, int], F: Formula, codes: SphereCodes) -> bool:
    if isinstance(F, TrueConst):
        return True
    if isinstance(F, FalseConst):
        return False
    if isinstance(F, RelAtom):
        return A.holds(F.name, [env[v] for v in F.args])
    if isinstance(F, EqAtom):
        return env[F.left] == env[F.right]
    if isinstance(F, Not):
        return not _fo(A, env, F.child, codes)
    if isinstance(F, And):
        return all(_fo(A, env, c, codes) for c in F.children)
    if isinstance(F, Or):
        # long disjunctions of Hanf atoms are the common case in normal forms
        last_key, counts = None, None
        for c in F.children:
            if type(c) is HanfAtom and c.threshold > 0:
                d, centers, code = c.probe
                if (d, centers) != last_key:
                    last_key = (d, centers)
                    counts = codes.witness_counts(d, tuple(env[v] for v in centers))
                if counts.get(code, 0) >= c.threshold:
                    return True
            elif _fo(A, env, c, codes):
                return True
        return False
    if isinstance(F, (Exists, Forall)):
        saved = env.get(F.var)
        want = isinstance(F, Exists)
        result = not want
        for a in A.universe:
            env[F.var] = a
            if _fo(A, env, F.body, codes) == want:
                result = want
                break
        if saved is None:
            env.pop(F.var, None)
        else:
            env[F.var] = saved
        return result
    if isinstance(F, HanfAtom):
        if F.threshold == 0:
            return True
        prefix = tuple(env[v] for v in F.centers)
        counts = codes.witness_counts(F.radius, prefix)
        return counts.get(F.sphere.code, 0) >= F.threshold
    if isinstance(F, SphereAtom):
        return codes.code(F.sphere.radius, tuple(env[v] for v in F.variables)) == F.sphere.code
    raise TypeError(f"not a formula: {F!r}")


# -- counting evaluation of Hanf normal forms --------------------------------------


class _Program:
    """A Hanf normal form compiled for repeated evaluation.

    Disjunctions of atoms sharing radius and centers become a table
    ``code -> least threshold`` that is probed with the realized codes only.
    """

    def __init__(self, F: Formula):
        self.patterns: dict[tuple, int] = {}
        self.max_threshold: dict[int, int] = {}
        self.root = self._compile(F)

    def _pattern(self, atom: HanfAtom) -> int:
        key = (atom.radius, atom.centers)
        pid = self.patterns.setdefault(key, len(self.patterns))
        self.max_threshold[pid] = max(self.max_threshold.get(pid, 0), atom.threshold)
        return pid

    def _compile(self, F: Formula):
        if isinstance(F, TrueConst):
            return ("const", True)
        if isinstance(F, FalseConst):
            return ("const", False)
        if isinstance(F, HanfAtom):
            if F.threshold == 0:
                return ("const", True)
            return ("atom", self._pattern(F), F.sphere.code, F.threshold)
        if isinstance(F, Not):
            return ("not", self._compile(F.child))
        if isinstance(F, And):
            return ("and", tuple(self._compile(c) for c in F.children))
        if isinstance(F, Or):
            tables: dict[int, dict[bytes, int]] = {}
            rest = []
            for c in F.children:
                if isinstance(c, HanfAtom) and c.threshold > 0:
                    t = tables.setdefault(self._pattern(c), {})
                    t[c.sphere.code] = min(t.get(c.sphere.code, c.threshold), c.threshold)
                else:
                    rest.append(self._compile(c))
            tabled = tuple(("table", pid, t) for pid, t in tables.items())
            return ("or", tabled + tuple(rest))
        raise HanfError(f"{type(F).__name__} in a Hanf normal form")

    def run(self, counts: list[Counter]) -> bool:
        return self._run(self.root, counts)

    def _run(self, node, counts) -> bool:
        tag = node[0]
        if tag == "table":
            table = node[2]
            return any(k >= table.get(code, k + 1) for code, k in counts[node[1]].items())
        if tag == "atom":
            return counts[node[1]].get(node[2], 0) >= node[3]
        if tag == "or":
            return any(self._run(c, counts) for c in node[1])
        if tag == "and":
            return all(self._run(c, counts) for c in node[1])
        if tag == "not":
            return not self._run(node[1], counts)
        return node[1]


_PROGRAMS: dict[int, tuple[Formula, _Program]] = {}


def _program(F: Formula) -> _Program:
    hit = _PROGRAMS.get(id(F))
    if hit is not None and hit[0] is F:
        return hit[1]
    prog = _Program(F)
    if len(_PROGRAMS) > 64:
        _PROGRAMS.clear()
    _PROGRAMS[id(F)] = (F, prog)
    return prog


def eval_hnf(
    A: Structure, asg: Assignment, psi: HnfFormula | Formula, *, codes: SphereCodes | None = None
) -> bool:
    """Evaluate a Hanf normal form with one counting pass per sphere pattern."""
    F = psi.formula if isinstance(psi, HnfFormula) else psi
    prog = _program(F)
    needed = sorted({v for _, cs in prog.patterns for v in cs})
    _check_assignment(A, asg, needed)
    codes = codes or SphereCodes(A)
    counts = []
    for (d, centers), pid in prog.patterns.items():
        prefix = tuple(asg[v] for v in centers)
        counts.append(codes.witness_counts(d, prefix))
    if prog.patterns:
        _check_signature(A, F)
    return prog.run(counts)


def sphere_histogram(A: Structure, d: int, cap: int) -> dict[bytes, int]:
    """Number of elements realizing each single-center ``d``-sphere, capped."""
    if d < 1 or cap < 1:
        raise ValueError("need d >= 1 and cap >= 1")
    tally = Counter(sphere_code(A, (a,), d) for a in A.universe)
    return {code: min(k, cap) for code, k in sorted(tally.items())}


def format_histogram(hist: Mapping[bytes, int]) -> str:
    return "".join(f"{code.decode()} {k}\n" for code, k in sorted(hist.items()))


# -- structure generation -----------------------------------------------------------


def _structures_of_size(sig: Signature, n: int, f: int) -> Iterator[Structure]:
    empty = [frozenset() for _ in sig.relations]
    no_adj = [frozenset() for _ in range(n)]
    for facts in _extensions(sig, empty, no_adj, 0, (), n, f, False):
        yield Structure(sig, n, tuple(frozenset(r) for r in facts))


@lru_cache(maxsize=16)
def _dedup_structures(sig: Signature, n: int, f: int) -> tuple[Structure, ...]:
    seen: dict[bytes, Structure] = {}
    for A in _structures_of_size(sig, n, f):
        seen.setdefault(structure_code(A), A)
    return tuple(seen.values())


def enumerate_structures(
    sig: Signature, max_size: int, f: int, *, dedup: bool = False, size_cap: int = EXHAUSTIVE_SIZE_CAP
) -> Iterator[Structure]:
    """Every structure on ``1..max_size`` elements with degree ``<= f``.

    Labeled by default; with ``dedup`` one structure per isomorphism class.
    """
    if max_size > size_cap:
        raise BudgetExceeded(
            f"exhaustive enumeration up to size {max_size} exceeds cap {size_cap}",
            {"max_size": max_size, "size_cap": size_cap},
        )
    for n in range(1, max_size + 1):
        if dedup:
            yield from _dedup_structures(sig, n, f)
        else:
            yield from _structures_of_size(sig, n, f)


def random_structure(sig: Signature, size: int, f: int, seed: int) -> Structure:
    """Seeded random structure of degree ``<= f``.

    Tuples are visited in a seeded random order and kept with a fixed
    probability; a tuple that would push some element above degree ``f`` is
    skipped.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    rng = random.Random(seed)
    nbrs: list[set[int]] = [set() for _ in range(size)]
    facts: list[set[tuple[int, ...]]] = [set() for _ in sig.relations]
    candidates = [
        (r, t)
        for r, (_, arity) in enumerate(sig.relations)
        for t in itertools.product(range(size), repeat=arity)
    ]
    rng.shuffle(candidates)
    for r, t in candidates:
        arity = len(t)
        p = 0.5 if arity == 1 else min(0.5, 1.5 / size ** (arity - 1))
        if rng.random() >= p:
            continue
        ents = set(t)
        if any(len(nbrs[a] | (ents - {a})) > f for a in ents):
            continue
        for a in ents:
            nbrs[a] |= ents - {a}
        facts[r].add(t)
    return Structure(sig, size, tuple(frozenset(x) for x in facts))


# -- bounded equivalence ------------------------------------------------------------


class Verdict(enum.Enum):
    EQUIVALENT = "Equivalent"
    COUNTEREXAMPLE = "Counterexample"


@dataclass(frozen=True)
class EquivBudget:
    exhaustive_max_size: int = 4
    sample_count: int = 200
    sample_min_size: int = 5
    sample_max_size: int = 8
    seed: int = 0
    dedup: bool = True


@dataclass(frozen=True)
class EquivVerdict:
    status: Verdict
    witness: tuple[Structure, dict[str, int]] | None = None
    structures_checked: int = 0
    assignments_checked: int = 0
    budget: EquivBudget = field(default_factory=EquivBudget)

    def __post_init__(self):
        if self.status is Verdict.COUNTEREXAMPLE and self.witness is None:
            raise ValueError("a counterexample verdict needs a witness")

    @property
    def equivalent(self) -> bool:
        return self.status is Verdict.EQUIVALENT


def oracle_structures(sig: Signature, f: int, budget: EquivBudget) -> Iterator[Structure]:
    """The exhaustive part followed by the seeded samples."""
    yield from enumerate_structures(sig, budget.exhaustive_max_size, f, dedup=budget.dedup)
    rng = random.Random(budget.seed)
    for _ in range(budget.sample_count):
        size = rng.randint(budget.sample_min_size, budget.sample_max_size)
        yield random_structure(sig, size, f, rng.getrandbits(32))


def evaluate(A: Structure, asg: Assignment, F, codes: SphereCodes | None = None) -> bool:
    """``eval_hnf`` for Hanf normal forms, ``eval_fo`` otherwise."""
    if isinstance(F, HnfFormula):
        return eval_hnf(A, asg, F, codes=codes)
    return eval_fo(A, asg, F, codes=codes)


def _variables_of(F) -> list[str]:
    if isinstance(F, HnfFormula):
        return list(F.context)
    return free_variables(F)


def _first_disagreement(F, G, variables, structures, start: int):
    """Scan ``structures``; return ``(index, assignment)`` of the first mismatch."""
    for i, A in enumerate(structures, start):
        codes = SphereCodes(A)
        for values in itertools.product(A.universe, repeat=len(variables)):
            asg = dict(zip(variables, values))
            if evaluate(A, asg, F, codes) != evaluate(A, asg, G, codes):
                return i, asg
    return None


_SHARD_TASK: tuple | None = None


def _run_shard(bounds):
    F, G, variables, structures = _SHARD_TASK
    lo, hi = bounds
    return _first_disagreement(F, G, variables, structures[lo:hi], lo)


def check_f_equiv(
    F,
    G,
    f: int,
    sig: Signature,
    budget: EquivBudget = EquivBudget(),
    *,
    variables: Sequence[str] | None = None,
    jobs: int = 1,
) -> EquivVerdict:
    """Compare ``F`` and ``G`` on degree-``<= f`` structures up to the budget.

    Either argument may be a plain formula or a :class:`HnfFormula`.  The
    first disagreement in enumeration order is returned, also when the
    structure stream is split across ``jobs`` worker processes.
    """
    vf, vg = _variables_of(F), _variables_of(G)
    if variables is None:
        if set(vf) != set(vg):
            raise EvaluationError(f"free variables differ: {sorted(vf)} vs {sorted(vg)}")
        variables = vf
    else:
        variables = list(variables)
        missing = (set(vf) | set(vg)) - set(variables)
        if missing:
            raise EvaluationError(f"variables {sorted(missing)} are free but not listed")
    structures = list(oracle_structures(sig, f, budget))
    k = len(variables)
    if jobs > 1 and len(structures) > 1:
        hit = _parallel_scan(F, G, variables, structures, jobs)
    else:
        hit = _first_disagreement(F, G, variables, structures, 0)
    if hit is None:
        total = sum(A.size ** k for A in structures)
        return EquivVerdict(Verdict.EQUIVALENT, None, len(structures), total, budget)
    index, asg = hit
    A = structures[index]
    before = sum(B.size ** k for B in structures[:index])
    position = 0
    for v in variables:
        position = position * A.size + asg[v]
    return EquivVerdict(Verdict.COUNTEREXAMPLE, (A, asg), index + 1, before + position + 1, budget)


def _parallel_scan(F, G, variables, structures, jobs: int):
    import multiprocessing

    global _SHARD_TASK
    step = -(-len(structures) // jobs)
    bounds = [(lo, min(lo + step, len(structures))) for lo in range(0, len(structures), step)]
    _SHARD_TASK = (F, G, list(variables), structures)
    try:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(min(jobs, len(bounds))) as pool:
            hits = [h for h in pool.map(_run_shard, bounds) if h is not None]
    finally:
        _SHARD_TASK = None
    return min(hits, key=lambda h: h[0]) if hits else None
