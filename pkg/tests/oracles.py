"""Brute-force reference implementations used by the tests.

Nothing here calls the canonical labeling; isomorphism is decided by
``is_isomorphic`` alone and distances by Floyd-Warshall.
"""

from __future__ import annotations

import itertools
from collections import defaultdict

from hanf.spheres import Sphere, is_isomorphic
from hanf.structure import Signature, Structure

INF = float("inf")


def distance_matrix(A: Structure) -> list[list[float]]:
    n = A.size
    dist = [[0 if i == j else INF for j in range(n)] for i in range(n)]
    for rel in A.facts:
        for t in rel:
            for a, b in itertools.permutations(set(t), 2):
                dist[a][b] = 1
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if dist[i][k] + dist[k][j] < dist[i][j]:
                    dist[i][j] = dist[i][k] + dist[k][j]
    return dist


def gaifman_degree(n: int, facts) -> int:
    nbrs = [set() for _ in range(n)]
    for rel in facts:
        for t in rel:
            for a in t:
                nbrs[a] |= set(t) - {a}
    return max((len(x) for x in nbrs), default=0)


def brute_extract(A: Structure, centers, d: int) -> Sphere:
    """The ``d``-sphere around ``centers``, built from the distance matrix."""
    dist = distance_matrix(A)
    keep = sorted(v for v in A.universe if min(dist[c][v] for c in centers) < d)
    pos = {v: i for i, v in enumerate(keep)}
    facts = tuple(
        frozenset(tuple(pos[e] for e in t) for t in rel if all(e in pos for e in t))
        for rel in A.facts
    )
    return Sphere(Structure(A.signature, len(keep), facts), tuple(pos[c] for c in centers), d)


def _profile(s: Sphere):
    """An isomorphism invariant used only to bucket candidates."""
    A = s.carrier
    dist = s.center_distances
    per = []
    for v in A.universe:
        inc = sorted((r, tuple(e == v for e in t)) for r, rel in enumerate(A.facts) for t in rel if v in t)
        per.append((dist[v], tuple(c == v for c in s.centers), tuple(inc)))
    return A.size, tuple(len(r) for r in A.facts), tuple(sorted(per))


def dedup_isomorphic(spheres) -> list[Sphere]:
    """Keep one sphere per class, comparing with ``is_isomorphic`` inside buckets."""
    buckets: dict[tuple, list[Sphere]] = defaultdict(list)
    out = []
    for s in spheres:
        bucket = buckets[_profile(s)]
        if not any(is_isomorphic(s, t) for t in bucket):
            bucket.append(s)
            out.append(s)
    return out


def _center_patterns(n: int):
    """Restricted growth strings: which centers coincide."""
    def rec(prefix, top):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for b in range(top + 2):
            yield from rec(prefix + [b], max(top, b))
    yield from rec([], -1)


def _subsets(items):
    for r in range(len(items) + 1):
        yield from itertools.combinations(items, r)


def brute_spheres(sig: Signature, d: int, n: int, f: int) -> list[Sphere]:
    """All ``d``-spheres (``d <= 2``) with ``n`` centers and degree ``<= f``.

    Carriers are labeled structures: the distinct centers first, then the
    elements at distance 1 listed in nondecreasing order of how they attach
    to the centers.  Every class has such a labeling, so deduplicating the
    candidates by isomorphism gives the classes.
    """
    if d not in (1, 2):
        raise ValueError("brute force covers radius 1 and 2 only")
    candidates = []
    for pattern in _center_patterns(n):
        k0 = max(pattern) + 1
        core = list(range(k0))
        core_tuples = [
            (r, t) for r, (_, ar) in enumerate(sig.relations)
            for t in itertools.product(core, repeat=ar)
        ]
        for chosen in _subsets(core_tuples):
            base = [set() for _ in sig.relations]
            for r, t in chosen:
                base[r].add(t)
            if gaifman_degree(k0, base) > f:
                continue
            if d == 1:
                candidates.append((k0, base, pattern))
                continue
            candidates.extend(_grow_layer(sig, k0, base, pattern, f))
    spheres = []
    for size, facts, centers in candidates:
        carrier = Structure(sig, size, tuple(frozenset(r) for r in facts))
        spheres.append(Sphere(carrier, centers, d))
    return dedup_isomorphic(spheres)


def _grow_layer(sig, k0, base, pattern, f):
    """Candidates for radius 2: add ``m`` elements adjacent to some center."""
    star = k0  # placeholder id while describing attachments
    options = []
    for r, (_, ar) in enumerate(sig.relations):
        for t in itertools.product(range(k0 + 1), repeat=ar):
            if star in t:
                options.append((r, t))
    attachments = [
        frozenset(a) for a in _subsets(options)
        if any(set(t) - {star} for _, t in a)
    ]
    attachments.sort(key=sorted)
    out = [(k0, base, pattern)]
    for m in range(1, k0 * f + 1):
        for combo in itertools.combinations_with_replacement(attachments, m):
            facts = [set(r) for r in base]
            for i, att in enumerate(combo):
                v = k0 + i
                for r, t in att:
                    facts[r].add(tuple(v if e == star else e for e in t))
            size = k0 + m
            if gaifman_degree(size, facts) > f:
                continue
            layer = list(range(k0, size))
            pair_tuples = [
                (r, t) for r, (_, ar) in enumerate(sig.relations)
                for t in itertools.product(layer, repeat=ar)
                if len(set(t)) > 1
            ]
            for extra in _subsets_pruned(pair_tuples, facts, size, f):
                out.append((size, extra, pattern))
    return out


def _subsets_pruned(tuples, facts, size, f):
    """Every way to add facts among layer elements, pruning on degree."""
    def rec(i, cur):
        if i == len(tuples):
            yield [set(r) for r in cur]
            return
        yield from rec(i + 1, cur)
        r, t = tuples[i]
        cur[r].add(t)
        if gaifman_degree(size, cur) <= f:
            yield from rec(i + 1, cur)
        cur[r].discard(t)
    yield from rec(0, [set(r) for r in facts])


def brute_structures(sig: Signature, n: int, f: int):
    """Every labeled structure on ``n`` elements with degree ``<= f``."""
    tuples = [
        (r, t) for r, (_, ar) in enumerate(sig.relations)
        for t in itertools.product(range(n), repeat=ar)
    ]
    for mask in range(1 << len(tuples)):
        facts = [set() for _ in sig.relations]
        for i, (r, t) in enumerate(tuples):
            if mask >> i & 1:
                facts[r].add(t)
        if gaifman_degree(n, facts) <= f:
            yield Structure(sig, n, tuple(frozenset(x) for x in facts))


def brute_witnesses(A: Structure, prefix, pattern: Sphere) -> int:
    """How many ``b`` make ``prefix + (b,)`` realize ``pattern``."""
    return sum(
        is_isomorphic(brute_extract(A, tuple(prefix) + (b,), pattern.radius), pattern)
        for b in A.universe
    )
