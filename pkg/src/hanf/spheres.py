"""Spheres: structures covered by a ball around an ordered tuple of centers.

A ``d``-sphere is kept together with its *declared* radius ``d``.  The
declared radius is part of the meaning of a sphere formula: ``sph_tau(a)``
holds when the ``d``-sphere extracted around ``a`` is isomorphic to ``tau``,
so a sphere whose elements all sit close to the centers still asserts that
nothing else lies within distance ``d - 1``.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Sequence

from .errors import BudgetExceeded, CenterMismatchError, ElementError, ParseError, SignatureError
from .structure import (
    Fact,
    Signature,
    Structure,
    _content_lines,
    format_facts,
    induced_substructure,
    parse_fact_line,
)

DEFAULT_MAX_SPHERES = 250_000
DEFAULT_MAX_CARRIER = 64


@dataclass(frozen=True)
class Sphere:
    carrier: Structure
    centers: tuple[int, ...]
    radius: int

    def __post_init__(self):
        object.__setattr__(self, "centers", tuple(self.centers))
        if not self.centers:
            raise ElementError("a sphere needs at least one center")
        if self.radius < 1:
            raise ValueError(f"sphere radius must be >= 1, got {self.radius}")
        for c in self.centers:
            self.carrier.check_element(c)
        if self.true_radius > self.radius:
            raise ValueError(
                f"not a {self.radius}-sphere: some element lies at distance "
                f">= {self.radius} from every center"
            )

    @property
    def signature(self) -> Signature:
        return self.carrier.signature

    @property
    def n_centers(self) -> int:
        return len(self.centers)

    @property
    def size(self) -> int:
        return self.carrier.size

    @cached_property
    def center_distances(self) -> dict[int, int]:
        return self.carrier.distances_from(self.centers)

    @cached_property
    def true_radius(self) -> int:
        dist = self.center_distances
        if len(dist) < self.carrier.size:
            return self.carrier.size + 1  # unreachable element: not a sphere at all
        return max(dist.values()) + 1

    @cached_property
    def _labeling(self) -> tuple[bytes, tuple[int, ...]]:
        return canonical_labeling(self.carrier.size, self.carrier.facts, self.centers)

    @property
    def code(self) -> bytes:
        return self._labeling[0]

    def canonical(self) -> "Sphere":
        """The isomorphic sphere whose carrier is in canonical element order."""
        label = self._labeling[1]
        if all(i == x for i, x in enumerate(label)):
            return self
        facts = tuple(
            frozenset(tuple(label[e] for e in t) for t in rel) for rel in self.carrier.facts
        )
        carrier = Structure(self.carrier.signature, self.carrier.size, facts)
        s = Sphere(carrier, tuple(label[c] for c in self.centers), self.radius)
        s.__dict__["_labeling"] = (self.code, tuple(range(self.size)))
        return s

    def with_radius(self, radius: int) -> "Sphere":
        return Sphere(self.carrier, self.centers, radius)

    def slim(self) -> "Sphere":
        """Drop cached derived data (keeps the canonical labeling)."""
        self.__dict__.pop("center_distances", None)
        for name in ("neighbors", "incidence", "degree"):
            self.carrier.__dict__.pop(name, None)
        return self

    @cached_property
    def degree(self) -> int:
        return self.carrier.degree

    def __str__(self) -> str:
        return format_sphere(self)


def extract_sphere(A: Structure, centers: Sequence[int], d: int) -> Sphere:
    """``S_d^A(centers)``: the substructure on the ``d``-ball, with centers renumbered."""
    if not centers:
        raise ElementError("extract_sphere needs at least one center")
    if d < 1:
        raise ValueError(f"sphere radius must be >= 1, got {d}")
    dist = A.distances_from(centers, d - 1)
    sub, renum = induced_substructure(A, dist)
    return Sphere(sub, tuple(renum[c] for c in centers), d)


def ball_facts(A: Structure, centers: Sequence[int], d: int):
    """Size, relabeled facts and relabeled centers of ``S_d^A(centers)``.

    A lighter version of :func:`extract_sphere` for hot loops.
    """
    dist = A.distances_from(centers, d - 1)
    if 2 * len(dist) < A.size:
        keep = sorted(dist)
        renum = {a: i for i, a in enumerate(keep)}
        facts: list[set[Fact]] = [set() for _ in A.facts]
        inc = A.incidence
        for a in keep:
            for r, t in inc[a]:
                if all(e in renum for e in t):
                    facts[r].add(tuple(renum[e] for e in t))
        return len(keep), facts, tuple(renum[c] for c in centers)
    sub, renum = induced_substructure(A, dist)
    return sub.size, sub.facts, tuple(renum[c] for c in centers)


def sphere_code(A: Structure, centers: Sequence[int], d: int) -> bytes:
    """Canonical code of ``S_d^A(centers)`` without building a Sphere."""
    n, facts, cs = ball_facts(A, centers, d)
    return canonical_labeling(n, facts, cs)[0]


def radius_of(s: Sphere) -> int:
    """Least ``d >= 1`` whose ball around the centers covers the carrier."""
    return s.true_radius


def is_connected(s: Sphere) -> bool:
    return len(s.carrier.distances_from((0,))) == s.carrier.size


# -- canonical labeling ------------------------------------------------------


def _incidence(n: int, facts: Sequence[Iterable[Fact]]):
    inc: list[list[tuple[int, tuple[int, ...], Fact]]] = [[] for _ in range(n)]
    for r, rel in enumerate(facts):
        for t in rel:
            pat = tuple(t.index(e) for e in t)
            for v in set(t):
                inc[v].append((r, pat, t))
    return inc


def _compress(keys: list) -> list[int]:
    rank = {k: i for i, k in enumerate(sorted(set(keys)))}
    return [rank[k] for k in keys]


def _refine(colors: list[int], inc) -> list[int]:
    """Colour refinement to the coarsest equitable partition.

    ``colors`` must be compressed ranks; the result is again compressed and
    depends only on the isomorphism type of the coloured structure.
    """
    classes = len(set(colors))
    n = len(colors)
    while True:
        sigs = []
        for v in range(n):
            items = [(r, pat, tuple(-1 if e == v else colors[e] for e in t)) for r, pat, t in inc[v]]
            items.sort()
            sigs.append((colors[v], tuple(items)))
        uniq = sorted(set(sigs))
        if len(uniq) == classes:
            return colors
        rank = {s: i for i, s in enumerate(uniq)}
        colors = [rank[s] for s in sigs]
        classes = len(uniq)


def canonical_labeling(
    n: int, facts: Sequence[Iterable[Fact]], centers: Sequence[int]
) -> tuple[bytes, tuple[int, ...]]:
    """Canonical code and relabeling ``old -> new`` of a structure with centers.

    The code is the least encoding over all leaves of an
    individualization-refinement search.  Every branching choice is made on an
    isomorphism-invariant cell, so isomorphic inputs (with centers matched
    position by position) produce the same set of leaf encodings.
    """
    facts = [tuple(rel) for rel in facts]
    inc = _incidence(n, facts)
    start = _compress([tuple(i for i, c in enumerate(centers) if c == v) for v in range(n)])
    best: tuple | None = None
    best_label: list[int] | None = None

    stack = [start]
    while stack:
        colors = _refine(stack.pop(), inc)
        counts = Counter(colors)
        if len(counts) == n:
            enc = (
                tuple(colors[c] for c in centers),
                tuple(tuple(sorted(tuple(colors[e] for e in t) for t in rel)) for rel in facts),
            )
            if best is None or enc < best:
                best, best_label = enc, colors
            continue
        cell = min(c for c, k in counts.items() if k > 1)
        for v in reversed([u for u in range(n) if colors[u] == cell]):
            stack.append(_compress([2 * c + (0 if u == v else 1) for u, c in enumerate(colors)]))

    assert best is not None and best_label is not None
    cs, rels = best
    text = f"n{n};c{','.join(map(str, cs))}" + "".join(
        ";" + "|".join(".".join(map(str, t)) for t in rel) for rel in rels
    )
    return text.encode(), tuple(best_label)


def canonical_form(s: Sphere) -> bytes:
    """Equal for two spheres exactly when they are isomorphic (radius ignored)."""
    return s.code


def structure_code(A: Structure) -> bytes:
    """Canonical code of a plain structure (no centers)."""
    return canonical_labeling(A.size, A.facts, ())[0]


# -- isomorphism by backtracking -------------------------------------------


def _local_profile(A: Structure, v: int):
    prof = []
    for r, t in A.incidence[v]:
        prof.append((r, tuple(e == v for e in t)))
    prof.sort()
    return len(A.neighbors[v]), tuple(prof)


def is_isomorphic(s: Sphere, t: Sphere) -> bool:
    """Center-preserving isomorphism test by plain backtracking.

    Independent of :func:`canonical_labeling`; used to cross-check it.
    """
    if s.n_centers != t.n_centers:
        raise CenterMismatchError(f"{s.n_centers} centers vs {t.n_centers} centers")
    if s.signature != t.signature:
        raise SignatureError("spheres over different signatures")
    A, B = s.carrier, t.carrier
    if A.size != B.size or any(len(x) != len(y) for x, y in zip(A.facts, B.facts)):
        return False
    prof_a = [_local_profile(A, v) for v in A.universe]
    prof_b = [_local_profile(B, v) for v in B.universe]
    if sorted(prof_a) != sorted(prof_b):
        return False

    fwd: dict[int, int] = {}
    back: dict[int, int] = {}
    for a, b in zip(s.centers, t.centers):
        if fwd.get(a, b) != b or back.get(b, a) != a:
            return False
        fwd[a] = b
        back[b] = a
    for a, b in fwd.items():
        if prof_a[a] != prof_b[b]:
            return False

    def consistent(a: int, b: int) -> bool:
        # facts of A among mapped elements that mention a must map into B and vice versa
        ka = 0
        for r, tup in A.incidence[a]:
            if all(e in fwd for e in tup):
                if tuple(fwd[e] for e in tup) not in B.facts[r]:
                    return False
                ka += 1
        kb = sum(1 for r, tup in B.incidence[b] if all(e in back for e in tup))
        return ka == kb

    for a in fwd:
        if not consistent(a, fwd[a]):
            return False

    # BFS order from the centers keeps every new element next to a mapped one.
    order = [v for v, _ in sorted(A.distances_from(s.centers).items(), key=lambda kv: (kv[1], kv[0]))]
    order += [v for v in A.universe if v not in set(order)]
    order = [v for v in order if v not in fwd]

    def extend(i: int) -> bool:
        if i == len(order):
            return True
        a = order[i]
        mapped_nbrs = [fwd[x] for x in A.neighbors[a] if x in fwd]
        if mapped_nbrs:
            pool = set(B.neighbors[mapped_nbrs[0]])
            for y in mapped_nbrs[1:]:
                pool &= B.neighbors[y]
        else:
            pool = set(B.universe)
        for b in sorted(pool):
            if b in back or prof_b[b] != prof_a[a]:
                continue
            fwd[a] = b
            back[b] = a
            if consistent(a, b) and extend(i + 1):
                return True
            del fwd[a]
            del back[b]
        return False

    return extend(0)


# -- enumeration -----------------------------------------------------------


def _set_partitions(n: int) -> Iterator[tuple[int, ...]]:
    """Restricted growth strings of length ``n``: block index per position."""
    def rec(prefix: list[int], top: int):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for b in range(top + 2):
            prefix.append(b)
            yield from rec(prefix, max(top, b))
            prefix.pop()
    yield from rec([], -1)


def _fact_groups(sig: Signature, pool: Sequence[int], new: Sequence[int]):
    """Candidate facts over ``pool`` mentioning some new element, grouped by entry set.

    Returns ``(per_new, rest)``: ``per_new[i]`` holds the groups whose only new
    element is ``new[i]`` (in a layout shared by all new elements), ``rest``
    the groups with two or more new elements.
    """
    new_set = frozenset(new)
    groups: dict[frozenset[int], list[tuple[int, Fact]]] = {}
    for r, (_, arity) in enumerate(sig.relations):
        for t in itertools.product(pool, repeat=arity):
            if new_set.isdisjoint(t):
                continue
            groups.setdefault(frozenset(t), []).append((r, t))

    def options(facts):
        return [c for k in range(1, len(facts) + 1) for c in itertools.combinations(facts, k)]

    def key(entry):
        return (len(entry), sorted(entry))

    per_new = []
    for v in new:
        mine = sorted((e for e in groups if len(e & new_set) == 1 and v in e), key=key)
        per_new.append([(tuple(sorted(e)), options(groups[e])) for e in mine])
    rest = sorted((e for e in groups if len(e & new_set) >= 2), key=key)
    return per_new, [(tuple(sorted(e)), options(groups[e])) for e in rest]


def _extensions(
    sig: Signature,
    base_facts: Sequence[frozenset[Fact]],
    base_adj: Sequence[frozenset[int]],
    n_old: int,
    frontier: Sequence[int],
    k_new: int,
    f: int,
    require_anchor: bool,
) -> Iterator[list[set[Fact]]]:
    """Fact sets extending a base by ``k_new`` fresh elements within degree ``f``.

    New elements get indices ``n_old ..``.  With ``require_anchor`` every new
    element must end up Gaifman-adjacent to some frontier element.  In that
    mode new elements are interchangeable, so only extensions whose
    per-element fact choices are sorted are produced; every extension is
    isomorphic to one of those.  Without it the new elements are the centers
    and all labelings are kept.
    """
    new = list(range(n_old, n_old + k_new))
    pool = list(frontier) + new
    per_new, rest = _fact_groups(sig, pool, new)
    adj: dict[int, Counter] = {v: Counter() for v in pool}
    for v in frontier:
        for u in base_adj[v]:
            adj[v][u] += 1
    frontier_set = frozenset(frontier)
    late_anchor = any(frontier_set.intersection(e) for e, _ in rest)
    chosen: list[tuple[int, Fact]] = []
    signature: list[list] = [[] for _ in new]

    def add(entry, delta):
        for a in entry:
            for b in entry:
                if a != b:
                    adj[a][b] += delta
                    if adj[a][b] == 0:
                        del adj[a][b]

    def anchored():
        return all(not frontier_set.isdisjoint(adj[v]) for v in new)

    def with_group(entry, options, v, cont):
        # empty choice first, then each nonempty fact subset
        signature_v = signature[v - n_old] if v is not None else None
        if signature_v is not None:
            signature_v.append(())
        yield from cont()
        if signature_v is not None:
            signature_v.pop()
        if len(entry) >= 2:
            add(entry, 1)
            ok = all(len(adj[x]) <= f for x in entry)
        else:
            ok = True
        if ok:
            for combo in options:
                chosen.extend(combo)
                if signature_v is not None:
                    signature_v.append(
                        tuple((r, tuple(-1 if e == v else e for e in t)) for r, t in combo)
                    )
                yield from cont()
                if signature_v is not None:
                    signature_v.pop()
                del chosen[len(chosen) - len(combo):]
        if len(entry) >= 2:
            add(entry, -1)

    def phase1(i: int, j: int):
        if i == k_new:
            if require_anchor and not late_anchor and not anchored():
                return
            yield from phase2(0)
            return
        groups = per_new[i]
        if j == len(groups):
            if require_anchor and i > 0 and signature[i] < signature[i - 1]:
                return
            yield from phase1(i + 1, 0)
            return
        entry, options = groups[j]
        yield from with_group(entry, options, new[i], lambda: phase1(i, j + 1))

    def phase2(i: int):
        if i == len(rest):
            if require_anchor and late_anchor and not anchored():
                return
            facts = [set(rel) for rel in base_facts]
            for r, t in chosen:
                facts[r].add(t)
            yield facts
            return
        entry, options = rest[i]
        yield from with_group(entry, options, None, lambda: phase2(i + 1))

    yield from phase1(0, 0)


_SPHERE_CACHE: dict[tuple, tuple[Sphere, ...]] = {}


def _check_budget(count: int, max_spheres: int, stats: dict):
    if count > max_spheres:
        stats = dict(stats, classes=count, max_spheres=max_spheres)
        raise BudgetExceeded(
            f"sphere enumeration exceeded {max_spheres} classes "
            f"(radius {stats.get('radius')}, {stats.get('n_centers')} centers, degree {stats.get('degree')})",
            stats,
        )


def enumerate_spheres(
    sig: Signature,
    d: int,
    n_centers: int,
    f: int,
    *,
    max_spheres: int = DEFAULT_MAX_SPHERES,
    max_carrier: int = DEFAULT_MAX_CARRIER,
) -> tuple[Sphere, ...]:
    """One canonical representative per isomorphism class of ``d``-spheres.

    Spheres have ``n_centers`` centers (coincident centers included) and
    carrier degree ``<= f``; the result is sorted by canonical code.  Spheres
    of radius ``d`` are grown from those of radius ``d - 1`` by adding one
    layer of elements at distance ``d - 1``.
    """
    if d < 1 or n_centers < 1 or f < 0:
        raise ValueError("need d >= 1, n_centers >= 1, f >= 0")
    key = (sig, d, n_centers, f)
    if key in _SPHERE_CACHE:
        result = _SPHERE_CACHE[key]
        stats = {"radius": d, "n_centers": n_centers, "degree": f}
        _check_budget(len(result), max_spheres, stats)
        largest = max(s.size for s in result)
        if largest > max_carrier:
            raise BudgetExceeded(
                f"sphere carrier of size {largest} exceeds cap {max_carrier}",
                dict(stats, max_carrier=max_carrier),
            )
        return result
    stats = {"radius": d, "n_centers": n_centers, "degree": f}

    if n_centers >= 2:
        # ordered tuples of single-center spheres in separate components are
        # pairwise non-isomorphic, so this is a lower bound on the class count
        singles = enumerate_spheres(sig, d, 1, f, max_spheres=max_spheres, max_carrier=max_carrier)
        lower = len(singles) ** n_centers
        if lower > max_spheres:
            raise BudgetExceeded(
                f"at least {lower} classes of {d}-spheres with {n_centers} centers "
                f"(degree <= {f}); cap is {max_spheres}",
                dict(stats, lower_bound=lower, max_spheres=max_spheres),
            )

    found: dict[bytes, Sphere] = {}

    def admit(n: int, facts: list[set[Fact]], centers: tuple[int, ...]):
        if n > max_carrier:
            raise BudgetExceeded(
                f"sphere carrier of size {n} exceeds cap {max_carrier}",
                dict(stats, max_carrier=max_carrier),
            )
        code, label = canonical_labeling(n, facts, centers)
        if code in found:
            return
        carrier = Structure(
            sig, n, tuple(frozenset(tuple(label[e] for e in t) for t in rel) for rel in facts)
        )
        s = Sphere(carrier, tuple(label[c] for c in centers), d)
        s.__dict__["_labeling"] = (code, tuple(range(n)))
        found[code] = s.slim()
        _check_budget(len(found), max_spheres, stats)

    if d == 1:
        for blocks in _set_partitions(n_centers):
            k = max(blocks) + 1
            empty = [frozenset() for _ in sig.relations]
            no_adj = [frozenset() for _ in range(k)]
            for facts in _extensions(sig, empty, no_adj, 0, (), k, f, False):
                admit(k, facts, blocks)
    else:
        inner = enumerate_spheres(
            sig, d - 1, n_centers, f, max_spheres=max_spheres, max_carrier=max_carrier
        )
        for s in inner:
            A = s.carrier
            dist = s.center_distances
            frontier = [v for v in A.universe if dist[v] == d - 2]
            spare = sum(max(0, f - len(A.neighbors[v])) for v in frontier)
            for k in range(spare + 1):
                for facts in _extensions(
                    sig, A.facts, A.neighbors, A.size, frontier, k, f, True
                ):
                    admit(A.size + k, facts, s.centers)
            s.slim()

    result = tuple(found[c] for c in sorted(found))
    _SPHERE_CACHE[key] = result
    return result


def clear_sphere_cache() -> None:
    _SPHERE_CACHE.clear()


# -- text format ---------------------------------------------------------------


def format_sphere(s: Sphere) -> str:
    lines = [f"sphere {s.radius} {s.n_centers} {s.size}"]
    lines += [f"center {i} {c}" for i, c in enumerate(s.centers)]
    lines += format_facts(s.carrier)
    return "".join(line + "\n" for line in lines)


def parse_sphere(text: str, sig: Signature) -> Sphere:
    lines = list(_content_lines(text))
    if not lines:
        raise ParseError("empty sphere block")
    offset, header = lines[0]
    parts = header.split()
    if len(parts) != 4 or parts[0] != "sphere":
        raise ParseError(f"expected 'sphere <radius> <n_centers> <size>', got {header!r}", offset)
    try:
        radius, n, size = map(int, parts[1:])
    except ValueError:
        raise ParseError(f"non-integer in sphere header {header!r}", offset) from None
    centers: dict[int, int] = {}
    interp: dict[str, list[Fact]] = {}
    for offset, line in lines[1:]:
        parts = line.split()
        if parts[0] == "center":
            if len(parts) != 3:
                raise ParseError(f"expected 'center <i> <element>', got {line!r}", offset)
            i, e = int(parts[1]), int(parts[2])
            if not 0 <= e < size:
                raise ParseError(f"center element {e} outside 0..{size - 1}", offset)
            centers[i] = e
        else:
            name, args = parse_fact_line(sig, size, line, offset)
            interp.setdefault(name, []).append(args)
    if sorted(centers) != list(range(n)):
        raise ParseError(f"sphere declares {n} centers but lists {sorted(centers)}")
    try:
        return Sphere(Structure.build(sig, size, interp), tuple(centers[i] for i in range(n)), radius)
    except (ValueError, ElementError) as exc:
        raise ParseError(str(exc)) from None
