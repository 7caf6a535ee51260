"""Generators for test structures: colored binary trees, forests and cycles."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

from .formulas import And, EqAtom, Exists, Forall, Formula, Not, Or, RelAtom
from .structure import Signature, Structure, disjoint_union

TREE_SIGNATURE = Signature.of(S0=2, S1=2, U=1)
CYCLE_SIGNATURE = Signature.of(E=2)

MAX_DISTINGUISHER_HEIGHT = 3


@dataclass(frozen=True)
class TreeSpec:
    """A complete binary tree of ``height``; ``coloring`` picks the U-nodes.

    Nodes are addressed by bit strings, the root by ``""``.
    """

    height: int
    coloring: Callable[[str], bool] = lambda addr: False

    def __post_init__(self):
        if self.height < 0:
            raise ValueError("tree height must be >= 0")

    def addresses(self) -> list[str]:
        return [
            "".join(bits)
            for k in range(self.height + 1)
            for bits in itertools.product("01", repeat=k)
        ]


def make_tree(spec: TreeSpec) -> Structure:
    """Complete tree with ``S_i(u, ui)`` edges; nodes numbered breadth first."""
    addrs = spec.addresses()
    index = {a: i for i, a in enumerate(addrs)}
    s0 = [(index[a], index[a + "0"]) for a in addrs if len(a) < spec.height]
    s1 = [(index[a], index[a + "1"]) for a in addrs if len(a) < spec.height]
    u = [(index[a],) for a in addrs if spec.coloring(a)]
    return Structure.build(TREE_SIGNATURE, len(addrs), {"S0": s0, "S1": s1, "U": u})


def make_forest(specs: Sequence[TreeSpec]) -> Structure:
    if not specs:
        raise ValueError("a forest needs at least one tree")
    forest = make_tree(specs[0])
    for spec in specs[1:]:
        forest = disjoint_union(forest, make_tree(spec))
    return forest


def make_cycle(k: int) -> Structure:
    """The undirected cycle ``C_k`` as a symmetric binary relation ``E``."""
    if k < 3:
        raise ValueError("a cycle needs at least 3 nodes")
    edges = [(i, (i + 1) % k) for i in range(k)]
    return Structure.build(CYCLE_SIGNATURE, k, {"E": edges + [(b, a) for a, b in edges]})


def coloring_from_set(addresses) -> Callable[[str], bool]:
    chosen = frozenset(addresses)
    return lambda addr: addr in chosen


# -- a naive distinguishing sentence --------------------------------------------------


def _no_parent(v: str, z: str) -> Formula:
    return Forall(z, And((Not(RelAtom("S0", (z, v))), Not(RelAtom("S1", (z, v))))))


def _no_child(v: str, z: str) -> Formula:
    return Forall(z, And((Not(RelAtom("S0", (v, z))), Not(RelAtom("S1", (v, z))))))


def _same_color(a: str, b: str) -> Formula:
    ua, ub = RelAtom("U", (a,)), RelAtom("U", (b,))
    return Or((And((ua, ub)), And((Not(ua), Not(ub)))))


def _name(prefix: str, addr: str) -> str:
    return prefix + (addr or "e")


def _matching_below(addr: str, h: int) -> Formula:
    x, y = _name("x", addr), _name("y", addr)
    if len(addr) == h:
        return And((_no_child(x, "z"), _no_child(y, "z")))
    parts = []
    for bit in "01":
        cx, cy = _name("x", addr + bit), _name("y", addr + bit)
        rel = "S" + bit
        parts.append(
            Exists(cx, And((
                RelAtom(rel, (x, cx)),
                Exists(cy, And((
                    RelAtom(rel, (y, cy)),
                    _same_color(cx, cy),
                    _matching_below(addr + bit, h),
                ))),
            )))
        )
    return And(tuple(parts))


def tree_iso_distinguisher(h: int) -> Formula:
    """Sentence: no two complete height-``h`` components of a forest are isomorphic.

    Every node address of both trees gets its own variable, so the sentence
    grows exponentially in ``h``; heights above 3 are refused.
    """
    if not 0 <= h <= MAX_DISTINGUISHER_HEIGHT:
        raise ValueError(f"height must be in 0..{MAX_DISTINGUISHER_HEIGHT}")
    x, y = _name("x", ""), _name("y", "")
    pair = Exists(x, Exists(y, And((
        Not(EqAtom(x, y)),
        _no_parent(x, "z"),
        _no_parent(y, "z"),
        _same_color(x, y),
        _matching_below("", h),
    ))))
    return Not(pair)


def components(A: Structure) -> list[list[int]]:
    seen: set[int] = set()
    out = []
    for a in A.universe:
        if a not in seen:
            comp = sorted(A.distances_from((a,)))
            seen.update(comp)
            out.append(comp)
    return out


def complete_tree_coloring(A: Structure, comp: Sequence[int], h: int) -> tuple | None:
    """Colors by address if ``comp`` is a complete height-``h`` tree, else None."""
    s0, s1, u = A.relation("S0"), A.relation("S1"), A.relation("U")
    members = set(comp)
    roots = [v for v in comp if not any((w, v) in s0 or (w, v) in s1 for w in members)]
    if len(roots) != 1:
        return None
    colors = {}
    frontier = {"": roots[0]}
    placed = {roots[0]}
    for depth in range(h + 1):
        nxt = {}
        for addr, v in frontier.items():
            colors[addr] = (v,) in u
            kids = [[w for w in members if (v, w) in rel] for rel in (s0, s1)]
            if depth == h:
                if kids[0] or kids[1]:
                    return None
                continue
            if len(kids[0]) != 1 or len(kids[1]) != 1:
                return None
            for bit, k in zip("01", kids):
                nxt[addr + bit] = k[0]
                placed.add(k[0])
        frontier = nxt
    if placed != members:
        return None
    return tuple(colors[a] for a in sorted(colors, key=lambda s: (len(s), s)))


__all__ = [
    "TREE_SIGNATURE",
    "CYCLE_SIGNATURE",
    "TreeSpec",
    "make_tree",
    "make_forest",
    "make_cycle",
    "disjoint_union",
    "tree_iso_distinguisher",
    "components",
    "complete_tree_coloring",
    "coloring_from_set",
]
