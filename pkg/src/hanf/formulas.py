"""First-order syntax with counting Hanf atoms.

Formulas are immutable trees.  Besides the usual first-order connectives
there are two sphere nodes:

* ``HanfAtom(m, y, tau, xs)`` -- at least ``m`` elements ``y`` such that the
  tuple ``xs + (y,)`` realizes the sphere ``tau``;
* ``SphereAtom(tau, vs)`` -- the tuple ``vs`` realizes ``tau``.  It only
  appears in the output of :func:`expand_counting`.

Concrete syntax is an s-expression language::

    (true) (false) (rel E x y) (eq x y) (not F) (and F ...) (or F ...)
    (exists x F) (forall x F) (hanf m y (x1 ... xn) <sphere>)
    (sph (x1 ... xn) <sphere>)

where ``<sphere>`` is ``(sphere radius n_centers size (center i e) ... (R e ...) ...)``.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, fields
from functools import cached_property
from typing import Iterable, Iterator, Sequence

from .errors import ParseError, SignatureError
from .spheres import Sphere
from .structure import Signature, Structure


class Formula:
    """Base class.  Equality is structural; hashes are cached."""

    __slots__ = ()
    _fields: tuple[str, ...] = ()

    def _key(self) -> tuple:
        return tuple(getattr(self, f) for f in self._fields)

    def __hash__(self) -> int:
        h = self.__dict__.get("_hash")
        if h is None:
            h = hash((type(self).__name__, self._key()))
            self.__dict__["_hash"] = h
        return h

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if type(self) is not type(other) or hash(self) != hash(other):
            return False
        return self._key() == other._key()

    def __str__(self) -> str:
        return print_formula(self)

    def __init_subclass__(cls, **kw):
        super().__init_subclass__(**kw)


def _node(cls):
    cls = dataclass(frozen=True, eq=False, repr=True)(cls)
    cls._fields = tuple(f.name for f in fields(cls))
    return cls


@_node
class TrueConst(Formula):
    pass


@_node
class FalseConst(Formula):
    pass


TRUE = TrueConst()
FALSE = FalseConst()


@_node
class RelAtom(Formula):
    name: str
    args: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))


@_node
class EqAtom(Formula):
    left: str
    right: str


@_node
class Not(Formula):
    child: Formula


@_node
class And(Formula):
    children: tuple[Formula, ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))


@_node
class Or(Formula):
    children: tuple[Formula, ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))


@_node
class Exists(Formula):
    var: str
    body: Formula


@_node
class Forall(Formula):
    var: str
    body: Formula


@_node
class HanfAtom(Formula):
    """``exists^{>= threshold} witness: sph_sphere(centers, witness)``.

    The sphere is stored in canonical element order, so two atoms over
    isomorphic spheres with equal radius compare equal.
    """

    threshold: int
    witness: str
    sphere: Sphere
    centers: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "centers", tuple(self.centers))
        if self.threshold < 0:
            raise ValueError(f"negative threshold {self.threshold}")
        if self.sphere.n_centers != len(self.centers) + 1:
            raise ValueError(
                f"sphere has {self.sphere.n_centers} centers but the atom binds "
                f"{len(self.centers)} variables plus a witness"
            )
        if self.witness in self.centers:
            raise ValueError(f"witness {self.witness!r} also occurs as a center variable")
        object.__setattr__(self, "sphere", self.sphere.canonical())

    def _key(self):
        return (self.threshold, self.witness, self.centers, self.sphere.radius, self.sphere.code)

    @property
    def radius(self) -> int:
        return self.sphere.radius

    @cached_property
    def probe(self) -> tuple[int, tuple[str, ...], bytes]:
        """``(radius, centers, code)``, cached for evaluation loops."""
        return self.sphere.radius, self.centers, self.sphere.code


@_node
class SphereAtom(Formula):
    """``sph_sphere(variables)``: the variables realize the sphere."""

    sphere: Sphere
    variables: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        if self.sphere.n_centers != len(self.variables):
            raise ValueError("one variable per sphere center is required")
        object.__setattr__(self, "sphere", self.sphere.canonical())

    def _key(self):
        return (self.variables, self.sphere.radius, self.sphere.code)


# -- traversal helpers ------------------------------------------------------------


def iter_nodes(F: Formula) -> Iterator[Formula]:
    """Pre-order traversal without recursion (HNF trees get large)."""
    stack = [F]
    while stack:
        G = stack.pop()
        yield G
        if isinstance(G, Not):
            stack.append(G.child)
        elif isinstance(G, (And, Or)):
            stack.extend(reversed(G.children))
        elif isinstance(G, (Exists, Forall)):
            stack.append(G.body)


def hanf_atoms(F: Formula) -> list[HanfAtom]:
    """Distinct Hanf atoms in first-occurrence order."""
    seen: dict[HanfAtom, None] = {}
    for G in iter_nodes(F):
        if isinstance(G, HanfAtom):
            seen.setdefault(G)
    return list(seen)


def free_variables(F: Formula) -> list[str]:
    """Free variables in order of first occurrence."""
    out: dict[str, None] = {}

    def walk(G: Formula, bound: frozenset[str]):
        if isinstance(G, RelAtom):
            for v in G.args:
                if v not in bound:
                    out.setdefault(v)
        elif isinstance(G, EqAtom):
            for v in (G.left, G.right):
                if v not in bound:
                    out.setdefault(v)
        elif isinstance(G, HanfAtom):
            for v in G.centers:
                if v not in bound:
                    out.setdefault(v)
        elif isinstance(G, SphereAtom):
            for v in G.variables:
                if v not in bound:
                    out.setdefault(v)
        elif isinstance(G, Not):
            walk(G.child, bound)
        elif isinstance(G, (And, Or)):
            for c in G.children:
                walk(c, bound)
        elif isinstance(G, (Exists, Forall)):
            walk(G.body, bound | {G.var})

    walk(F, frozenset())
    return list(out)


def all_variables(F: Formula) -> set[str]:
    names: set[str] = set()
    for G in iter_nodes(F):
        if isinstance(G, RelAtom):
            names.update(G.args)
        elif isinstance(G, EqAtom):
            names.update((G.left, G.right))
        elif isinstance(G, HanfAtom):
            names.update(G.centers)
            names.add(G.witness)
        elif isinstance(G, SphereAtom):
            names.update(G.variables)
        elif isinstance(G, (Exists, Forall)):
            names.add(G.var)
    return names


def fresh_name(base: str, taken: Iterable[str]) -> str:
    taken = set(taken)
    if base not in taken:
        return base
    for i in itertools.count(1):
        cand = f"{base}_{i}"
        if cand not in taken:
            return cand
    raise AssertionError("unreachable")


def is_quantifier_free(F: Formula) -> bool:
    return not any(isinstance(G, (Exists, Forall, HanfAtom)) for G in iter_nodes(F))


def quantifier_rank(F: Formula) -> int:
    """Nesting depth of quantifiers; a Hanf atom counts as one quantifier."""
    if isinstance(F, (Exists, Forall)):
        return 1 + quantifier_rank(F.body)
    if isinstance(F, HanfAtom):
        return 1 if F.threshold > 0 else 0
    if isinstance(F, Not):
        return quantifier_rank(F.child)
    if isinstance(F, (And, Or)):
        return max((quantifier_rank(c) for c in F.children), default=0)
    return 0


def sphere_formula_size(s: Sphere) -> int:
    """Price of spelling out ``sph_s`` as a plain formula.

    One literal for every tuple over the carrier (the sphere fixes each
    relation completely), plus one node per center.
    """
    return 1 + s.n_centers + sum(s.size ** a for _, a in s.signature.relations)


def _expanded_atom_size(m: int, s: Sphere) -> int:
    if m == 0:
        return 1
    # m binders, m(m-1)/2 inequalities as (not (eq ..)), the guard
    # forall y ((or y=y1 .. y=ym) -> sph) written as (or (not (or ...)) sph)
    return m + 1 + 2 * (m * (m - 1) // 2) + 4 + m + sphere_formula_size(s)


def formula_size(F: Formula) -> tuple[int, int]:
    """``(ast_size, expanded_size)``.

    ``ast_size`` counts nodes with every Hanf atom as a single node;
    ``expanded_size`` prices each Hanf atom as its explicit counting
    expansion, which grows quadratically in the threshold.
    """
    ast = expanded = 0
    for G in iter_nodes(F):
        ast += 1
        if isinstance(G, HanfAtom):
            expanded += _expanded_atom_size(G.threshold, G.sphere)
        elif isinstance(G, SphereAtom):
            expanded += sphere_formula_size(G.sphere)
        else:
            expanded += 1
    return ast, expanded


def expand_counting(h: HanfAtom) -> Formula:
    """Spell out the counting quantifier of ``h`` with explicit witnesses.

    The sphere condition stays atomic as a :class:`SphereAtom`.
    """
    m = h.threshold
    if m < 1:
        raise ValueError("threshold 0 is identically true; simplify it instead")
    taken = set(h.centers) | {h.witness}
    ys = []
    for i in range(1, m + 1):
        y = fresh_name(f"{h.witness}{i}", taken)
        taken.add(y)
        ys.append(y)
    guard_var = fresh_name(h.witness, taken - {h.witness})
    distinct = [Not(EqAtom(a, b)) for a, b in itertools.combinations(ys, 2)]
    hit = Or(tuple(EqAtom(guard_var, y) for y in ys))
    guard = Forall(guard_var, Or((Not(hit), SphereAtom(h.sphere, h.centers + (guard_var,)))))
    body: Formula = And(tuple(distinct) + (guard,))
    for y in reversed(ys):
        body = Exists(y, body)
    return body


def check_signature(F: Formula, sig: Signature) -> None:
    for G in iter_nodes(F):
        if isinstance(G, RelAtom):
            arity = sig.arity(G.name)
            if arity != len(G.args):
                raise SignatureError(f"{G.name} expects {arity} arguments, got {len(G.args)}")
        elif isinstance(G, (HanfAtom, SphereAtom)) and G.sphere.signature != sig:
            raise SignatureError("sphere over a different signature")


def rename_apart(F: Formula) -> Formula:
    """Give every binder a name distinct from free variables and other binders.

    Already renamed-apart formulas are returned unchanged.
    """
    taken = set(free_variables(F))
    every = all_variables(F)

    def walk(G: Formula, env: dict[str, str]) -> Formula:
        if isinstance(G, RelAtom):
            return RelAtom(G.name, tuple(env.get(v, v) for v in G.args))
        if isinstance(G, EqAtom):
            return EqAtom(env.get(G.left, G.left), env.get(G.right, G.right))
        if isinstance(G, HanfAtom):
            cs = tuple(env.get(v, v) for v in G.centers)
            w = G.witness if G.witness not in cs else fresh_name(G.witness, set(cs) | every)
            return HanfAtom(G.threshold, w, G.sphere, cs)
        if isinstance(G, SphereAtom):
            return SphereAtom(G.sphere, tuple(env.get(v, v) for v in G.variables))
        if isinstance(G, Not):
            return Not(walk(G.child, env))
        if isinstance(G, (And, Or)):
            return type(G)(tuple(walk(c, env) for c in G.children))
        if isinstance(G, (Exists, Forall)):
            v = G.var
            if v in taken:
                v = fresh_name(v, taken | every)
            taken.add(v)
            every.add(v)
            return type(G)(v, walk(G.body, {**env, G.var: v}))
        return G

    return walk(F, {})


# -- printing -----------------------------------------------------------------------


def sphere_sexpr(s: Sphere) -> str:
    parts = [f"sphere {s.radius} {s.n_centers} {s.size}"]
    parts += [f"(center {i} {c})" for i, c in enumerate(s.centers)]
    for (name, _), rel in zip(s.signature.relations, s.carrier.facts):
        parts += ["(" + " ".join([name, *map(str, t)]) + ")" for t in sorted(rel)]
    return "(" + " ".join(parts) + ")"


def _print(F: Formula, out: list[str], indent: int | None, depth: int) -> None:
    if isinstance(F, TrueConst):
        out.append("(true)")
    elif isinstance(F, FalseConst):
        out.append("(false)")
    elif isinstance(F, RelAtom):
        out.append("(rel " + " ".join([F.name, *F.args]) + ")")
    elif isinstance(F, EqAtom):
        out.append(f"(eq {F.left} {F.right})")
    elif isinstance(F, HanfAtom):
        out.append(f"(hanf {F.threshold} {F.witness} ({' '.join(F.centers)}) {sphere_sexpr(F.sphere)})")
    elif isinstance(F, SphereAtom):
        out.append(f"(sph ({' '.join(F.variables)}) {sphere_sexpr(F.sphere)})")
    elif isinstance(F, Not):
        out.append("(not ")
        _print(F.child, out, indent, depth + 1)
        out.append(")")
    elif isinstance(F, (And, Or)):
        out.append("(and" if isinstance(F, And) else "(or")
        inner = "" if indent is None else "\n" + " " * (indent * (depth + 1))
        for c in F.children:
            out.append(inner if indent is not None else " ")
            _print(c, out, indent, depth + 1)
        out.append(")")
    elif isinstance(F, (Exists, Forall)):
        out.append(f"({'exists' if isinstance(F, Exists) else 'forall'} {F.var} ")
        _print(F.body, out, indent, depth + 1)
        out.append(")")
    else:
        raise TypeError(f"not a formula: {F!r}")


def print_formula(F: Formula, indent: int | None = None) -> str:
    """Render ``F``; with ``indent`` every And/Or child goes on its own line."""
    out: list[str] = []
    _print(F, out, indent, 0)
    return "".join(out)


# -- parsing ------------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\()|(\))|([^\s()]+))")


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens = []
    pos = 0
    text = "\n".join(line.split("#", 1)[0] for line in text.split("\n"))
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip() == "":
                break
            raise ParseError("unexpected character", pos)
        tok = m.group(1) or m.group(2) or m.group(3)
        tokens.append((tok, m.start(m.lastindex)))
        pos = m.end()
    return tokens


def _read_tree(tokens: list[tuple[str, int]]):
    """Tokens to nested lists; leaves are ``(atom, offset)`` pairs."""
    stack: list[list] = [[]]
    opens: list[int] = []
    for tok, pos in tokens:
        if tok == "(":
            stack.append([])
            opens.append(pos)
        elif tok == ")":
            if len(stack) == 1:
                raise ParseError("unbalanced ')'", pos)
            done = stack.pop()
            stack[-1].append((done, opens.pop()))
        else:
            stack[-1].append((tok, pos))
    if len(stack) != 1:
        raise ParseError("unbalanced '('", opens[-1])
    return stack[0]


def _atom(node, what: str) -> str:
    val, pos = node
    if isinstance(val, list):
        raise ParseError(f"expected {what}, got a list", pos)
    return val


def _int(node, what: str) -> int:
    text = _atom(node, what)
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"expected integer {what}, got {text!r}", node[1]) from None


def _list(node, what: str) -> list:
    val, pos = node
    if not isinstance(val, list):
        raise ParseError(f"expected {what}", pos)
    return val


def _var(node) -> str:
    name = _atom(node, "variable")
    if name[0].isdigit() or name in _KEYWORDS:
        raise ParseError(f"illegal variable name {name!r}", node[1])
    return name


_KEYWORDS = {"true", "false", "rel", "eq", "not", "and", "or", "exists", "forall", "hanf", "sph", "sphere", "center"}


def _parse_sphere(node, sig: Signature | None) -> Sphere:
    items = _list(node, "sphere block")
    pos = node[1]
    if sig is None:
        raise ParseError("a signature is required to parse sphere blocks", pos)
    if len(items) < 4 or _atom(items[0], "'sphere'") != "sphere":
        raise ParseError("expected (sphere radius n_centers size ...)", pos)
    radius, n, size = (_int(x, "sphere header field") for x in items[1:4])
    if size < 1:
        raise ParseError("sphere carrier must be nonempty", pos)
    centers: dict[int, int] = {}
    interp: dict[str, list[tuple[int, ...]]] = {}
    for item in items[4:]:
        parts = _list(item, "center or fact")
        if not parts:
            raise ParseError("empty list in sphere block", item[1])
        head = _atom(parts[0], "keyword or relation")
        if head == "center":
            if len(parts) != 3:
                raise ParseError("expected (center i element)", item[1])
            i, e = _int(parts[1], "center index"), _int(parts[2], "center element")
            if not 0 <= e < size:
                raise ParseError(f"center element {e} outside 0..{size - 1}", item[1])
            centers[i] = e
            continue
        if head not in sig:
            raise ParseError(f"unknown relation symbol {head!r}", item[1])
        args = tuple(_int(p, "element") for p in parts[1:])
        if len(args) != sig.arity(head):
            raise ParseError(f"{head} expects {sig.arity(head)} arguments, got {len(args)}", item[1])
        for e in args:
            if not 0 <= e < size:
                raise ParseError(f"element {e} outside 0..{size - 1}", item[1])
        interp.setdefault(head, []).append(args)
    if sorted(centers) != list(range(n)):
        raise ParseError(f"sphere declares {n} centers, found indices {sorted(centers)}", pos)
    try:
        return Sphere(Structure.build(sig, size, interp), tuple(centers[i] for i in range(n)), radius)
    except ValueError as exc:
        raise ParseError(str(exc), pos) from None


def _parse(node, sig: Signature | None) -> Formula:
    items = _list(node, "formula")
    pos = node[1]
    if not items:
        raise ParseError("empty formula", pos)
    head = _atom(items[0], "connective")
    args = items[1:]

    def arity(k: int):
        if len(args) != k:
            raise ParseError(f"'{head}' takes {k} argument(s), got {len(args)}", pos)

    if head == "true":
        arity(0)
        return TRUE
    if head == "false":
        arity(0)
        return FALSE
    if head == "rel":
        if not args:
            raise ParseError("'rel' needs a relation name", pos)
        name = _atom(args[0], "relation name")
        vs = tuple(_var(a) for a in args[1:])
        if sig is not None:
            if name not in sig:
                raise ParseError(f"unknown relation symbol {name!r}", args[0][1])
            if sig.arity(name) != len(vs):
                raise ParseError(f"{name} expects {sig.arity(name)} arguments, got {len(vs)}", pos)
        return RelAtom(name, vs)
    if head == "eq":
        arity(2)
        return EqAtom(_var(args[0]), _var(args[1]))
    if head == "not":
        arity(1)
        return Not(_parse(args[0], sig))
    if head in ("and", "or"):
        kids = tuple(_parse(a, sig) for a in args)
        return And(kids) if head == "and" else Or(kids)
    if head in ("exists", "forall"):
        arity(2)
        v = _var(args[0])
        body = _parse(args[1], sig)
        return Exists(v, body) if head == "exists" else Forall(v, body)
    if head == "hanf":
        arity(4)
        m = _int(args[0], "threshold")
        w = _var(args[1])
        cs = tuple(_var(x) for x in _list(args[2], "center variable list"))
        s = _parse_sphere(args[3], sig)
        try:
            return HanfAtom(m, w, s, cs)
        except ValueError as exc:
            raise ParseError(str(exc), pos) from None
    if head == "sph":
        arity(2)
        vs = tuple(_var(x) for x in _list(args[0], "variable list"))
        s = _parse_sphere(args[1], sig)
        try:
            return SphereAtom(s, vs)
        except ValueError as exc:
            raise ParseError(str(exc), pos) from None
    raise ParseError(f"unknown connective {head!r}", items[0][1])


def parse_formula(text: str, sig: Signature | None = None, *, rename: bool = True) -> Formula:
    """Parse one formula.  With a signature, relation arities are checked."""
    tree = _read_tree(_tokenize(text))
    if len(tree) != 1:
        where = tree[1][1] if len(tree) > 1 else 0
        raise ParseError(f"expected exactly one formula, found {len(tree)}", where)
    F = _parse(tree[0], sig)
    return rename_apart(F) if rename else F


def parse_formulas(text: str, sig: Signature | None = None) -> list[Formula]:
    """Parse a file holding several formulas (one s-expression each)."""
    return [rename_apart(_parse(node, sig)) for node in _read_tree(_tokenize(text))]
