"""Finite relational signatures and structures.

Elements of a structure are the dense indices ``0 .. size-1``.  Distances,
balls and degrees are measured in the Gaifman graph, where two distinct
elements are adjacent when some relation tuple contains both.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from .errors import ElementError, ParseError, SignatureError

Fact = tuple[int, ...]


@dataclass(frozen=True)
class Signature:
    """A finite purely relational vocabulary: ``((name, arity), ...)``."""

    relations: tuple[tuple[str, int], ...]

    def __post_init__(self):
        rels = tuple((str(n), int(a)) for n, a in self.relations)
        object.__setattr__(self, "relations", rels)
        names = [n for n, _ in rels]
        if len(set(names)) != len(names):
            raise SignatureError(f"duplicate relation symbol in {names}")
        for name, arity in rels:
            if arity < 1:
                raise SignatureError(f"relation {name!r} has arity {arity} < 1")
            if not name or any(c.isspace() or c in "()#" for c in name):
                raise SignatureError(f"illegal relation name {name!r}")

    @classmethod
    def of(cls, **arities: int) -> "Signature":
        return cls(tuple(arities.items()))

    @cached_property
    def _index(self) -> dict[str, int]:
        return {name: i for i, (name, _) in enumerate(self.relations)}

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.relations)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SignatureError(f"unknown relation symbol {name!r}") from None

    def arity(self, name: str) -> int:
        return self.relations[self.index(name)][1]

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self.relations)


@dataclass(frozen=True)
class Structure:
    """A finite structure over ``signature``.

    ``facts[i]`` is the interpretation of ``signature.relations[i]``.  Use
    :meth:`build` to construct one from a name-keyed mapping.
    """

    signature: Signature
    size: int
    facts: tuple[frozenset[Fact], ...]

    def __post_init__(self):
        if self.size < 1:
            raise ElementError("a structure needs a nonempty universe")
        if len(self.facts) != len(self.signature):
            raise SignatureError("one interpretation per relation symbol is required")
        facts = []
        for (name, arity), rel in zip(self.signature.relations, self.facts):
            rel = frozenset(tuple(t) for t in rel)
            for t in rel:
                if len(t) != arity:
                    raise SignatureError(f"{name}{t} has arity {len(t)}, expected {arity}")
                for e in t:
                    if not 0 <= e < self.size:
                        raise ElementError(f"{name}{t}: element {e} outside 0..{self.size - 1}")
            facts.append(rel)
        object.__setattr__(self, "facts", tuple(facts))

    @classmethod
    def build(
        cls,
        signature: Signature,
        size: int,
        interpretations: Mapping[str, Iterable[Sequence[int]]] | None = None,
    ) -> "Structure":
        interpretations = dict(interpretations or {})
        for name in interpretations:
            signature.index(name)
        facts = tuple(
            frozenset(tuple(t) for t in interpretations.get(name, ()))
            for name in signature.names
        )
        return cls(signature, size, facts)

    def relation(self, name: str) -> frozenset[Fact]:
        return self.facts[self.signature.index(name)]

    def holds(self, name: str, args: Sequence[int]) -> bool:
        return tuple(args) in self.relation(name)

    @property
    def universe(self) -> range:
        return range(self.size)

    def check_element(self, a: int) -> None:
        if not (isinstance(a, int) and 0 <= a < self.size):
            raise ElementError(f"element {a!r} outside universe 0..{self.size - 1}")

    @cached_property
    def neighbors(self) -> tuple[frozenset[int], ...]:
        """Gaifman neighbor sets, indexed by element."""
        adj: list[set[int]] = [set() for _ in range(self.size)]
        for rel in self.facts:
            for t in rel:
                for a in t:
                    adj[a].update(t)
        for a, s in enumerate(adj):
            s.discard(a)
        return tuple(frozenset(s) for s in adj)

    @cached_property
    def incidence(self) -> tuple[tuple[tuple[int, Fact], ...], ...]:
        """For each element, the ``(relation index, tuple)`` facts mentioning it."""
        inc: list[list[tuple[int, Fact]]] = [[] for _ in range(self.size)]
        for r, rel in enumerate(self.facts):
            for t in sorted(rel):
                for a in set(t):
                    inc[a].append((r, t))
        return tuple(tuple(x) for x in inc)

    @cached_property
    def degree(self) -> int:
        return max(len(s) for s in self.neighbors)

    def distances_from(self, sources: Iterable[int], limit: float = math.inf) -> dict[int, int]:
        """Multi-source BFS; only distances ``<= limit`` are reported."""
        dist: dict[int, int] = {}
        queue: deque[int] = deque()
        for a in sources:
            self.check_element(a)
            if a not in dist:
                dist[a] = 0
                queue.append(a)
        nbrs = self.neighbors
        while queue:
            a = queue.popleft()
            da = dist[a]
            if da >= limit:
                continue
            for b in nbrs[a]:
                if b not in dist:
                    dist[b] = da + 1
                    queue.append(b)
        return dist

    def __str__(self) -> str:
        return format_structure(self)


def gaifman_adjacent(A: Structure, a: int, b: int) -> bool:
    A.check_element(a)
    A.check_element(b)
    return b in A.neighbors[a]


def distance(A: Structure, a: int, b: int) -> float:
    """Gaifman distance; ``math.inf`` when ``b`` is unreachable from ``a``."""
    A.check_element(b)
    return A.distances_from((a,)).get(b, math.inf)


def ball(A: Structure, centers: Sequence[int], d: int) -> frozenset[int]:
    """Elements at distance ``< d`` from some center."""
    if not centers:
        raise ElementError("ball needs at least one center")
    if d < 1:
        raise ValueError(f"ball radius must be >= 1, got {d}")
    return frozenset(A.distances_from(centers, d - 1))


def degree(A: Structure) -> int:
    return A.degree


def induced_substructure(A: Structure, X: Iterable[int]) -> tuple[Structure, dict[int, int]]:
    """Restrict ``A`` to ``X``, renumbering elements in increasing order.

    Returns the substructure and the old-to-new element map.
    """
    keep = sorted(set(X))
    if not keep:
        raise ElementError("induced substructure of an empty set")
    for a in keep:
        A.check_element(a)
    renum = {a: i for i, a in enumerate(keep)}
    facts: list[set[Fact]] = [set() for _ in A.facts]
    if 2 * len(keep) < A.size:
        inc = A.incidence
        for a in keep:
            for r, t in inc[a]:
                if all(e in renum for e in t):
                    facts[r].add(tuple(renum[e] for e in t))
    else:
        for r, rel in enumerate(A.facts):
            for t in rel:
                if all(e in renum for e in t):
                    facts[r].add(tuple(renum[e] for e in t))
    sub = Structure(A.signature, len(keep), tuple(frozenset(f) for f in facts))
    return sub, renum


def disjoint_union(A: Structure, B: Structure) -> Structure:
    """``A`` followed by a copy of ``B`` shifted by ``A.size``."""
    if A.signature != B.signature:
        raise SignatureError("disjoint union of structures over different signatures")
    k = A.size
    facts = tuple(
        fa | frozenset(tuple(e + k for e in t) for t in fb)
        for fa, fb in zip(A.facts, B.facts)
    )
    return Structure(A.signature, A.size + B.size, facts)


# -- text formats -----------------------------------------------------------


def _content_lines(text: str):
    offset = 0
    for raw in text.splitlines(keepends=True):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield offset, line
        offset += len(raw)


def parse_signature(text: str) -> Signature:
    rels = []
    for offset, line in _content_lines(text):
        parts = line.split()
        if len(parts) != 3 or parts[0] != "rel":
            raise ParseError(f"expected 'rel <name> <arity>', got {line!r}", offset)
        try:
            arity = int(parts[2])
        except ValueError:
            raise ParseError(f"arity must be an integer: {line!r}", offset) from None
        rels.append((parts[1], arity))
    try:
        return Signature(tuple(rels))
    except SignatureError as exc:
        raise ParseError(str(exc)) from None


def format_signature(sig: Signature) -> str:
    return "".join(f"rel {n} {a}\n" for n, a in sig.relations)


def parse_fact_line(sig: Signature, size: int, line: str, offset: int | None = None):
    parts = line.split()
    name = parts[0]
    if name not in sig:
        raise ParseError(f"unknown relation symbol {name!r}", offset)
    arity = sig.arity(name)
    if len(parts) - 1 != arity:
        raise ParseError(f"{name} expects {arity} arguments, got {len(parts) - 1}", offset)
    try:
        args = tuple(int(p) for p in parts[1:])
    except ValueError:
        raise ParseError(f"non-integer element in {line!r}", offset) from None
    for e in args:
        if not 0 <= e < size:
            raise ParseError(f"element {e} outside 0..{size - 1}", offset)
    return name, args


def parse_structure(text: str, sig: Signature) -> Structure:
    lines = list(_content_lines(text))
    if not lines:
        raise ParseError("empty structure file")
    offset, header = lines[0]
    parts = header.split()
    if len(parts) != 2 or parts[0] != "structure":
        raise ParseError(f"expected 'structure <size>', got {header!r}", offset)
    try:
        size = int(parts[1])
    except ValueError:
        raise ParseError(f"size must be an integer: {header!r}", offset) from None
    if size < 1:
        raise ParseError("structure size must be >= 1", offset)
    interp: dict[str, list[Fact]] = {}
    for offset, line in lines[1:]:
        name, args = parse_fact_line(sig, size, line, offset)
        interp.setdefault(name, []).append(args)
    return Structure.build(sig, size, interp)


def format_facts(A: Structure) -> list[str]:
    out = []
    for (name, _), rel in zip(A.signature.relations, A.facts):
        for t in sorted(rel):
            out.append(" ".join([name, *map(str, t)]))
    return out


def format_structure(A: Structure) -> str:
    return "".join(line + "\n" for line in [f"structure {A.size}", *format_facts(A)])
