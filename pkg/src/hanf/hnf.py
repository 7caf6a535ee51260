"""Compilation of first-order formulas into Hanf normal form.

The engine walks the formula with an ordered variable context.  Quantifier
free parts become disjunctions over 1-spheres; every existential quantifier
is removed by :func:`eliminate_exists`, which triples the sphere radius.
"""

from __future__ import annotations

import enum
import time
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

from .errors import BudgetExceeded, HanfError, SignatureError
from .formulas import (
    FALSE,
    TRUE,
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
    formula_size,
    free_variables,
    hanf_atoms,
    is_quantifier_free,
    iter_nodes,
    rename_apart,
)
from .spheres import (
    DEFAULT_MAX_CARRIER,
    DEFAULT_MAX_SPHERES,
    Sphere,
    enumerate_spheres,
    extract_sphere,
    is_connected,
    sphere_code,
)
from .structure import Signature


@dataclass(frozen=True)
class NormalizationConfig:
    """Degree bound, signature and resource caps for :func:`normalize`.

    ``guard_disconnected`` keeps the consistency test in the disconnected
    case of the elimination step (see :func:`rewrite_hanf_atom`); turning it
    off reproduces the bare rewrite, which is unsound.
    """

    signature: Signature
    f: int
    max_spheres: int = DEFAULT_MAX_SPHERES
    max_carrier: int = DEFAULT_MAX_CARRIER
    max_disjuncts: int = 2_000_000
    max_size: int = 50_000_000
    trace: bool = False
    guard_disconnected: bool = True

    def __post_init__(self):
        if self.f < 0:
            raise ValueError("degree bound must be >= 0")
        for name in ("max_spheres", "max_carrier", "max_disjuncts", "max_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class HnfFormula:
    """A Boolean combination of Hanf atoms over a fixed variable context."""

    formula: Formula
    context: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "context", tuple(self.context))
        for G in iter_nodes(self.formula):
            if isinstance(G, HanfAtom):
                if G.centers != self.context:
                    raise HanfError(
                        f"Hanf atom over {G.centers} in context {self.context}"
                    )
            elif not isinstance(G, (TrueConst, FalseConst, Not, And, Or)):
                raise HanfError(f"{type(G).__name__} is not allowed in Hanf normal form")

    @cached_property
    def atoms(self) -> list[HanfAtom]:
        return hanf_atoms(self.formula)

    @property
    def max_radius(self) -> int:
        return max((a.radius for a in self.atoms), default=0)

    @property
    def max_threshold(self) -> int:
        return max((a.threshold for a in self.atoms), default=0)

    def metrics(self) -> dict:
        ast, expanded = formula_size(self.formula)
        return {
            "hanf_atoms": len(self.atoms),
            "max_radius": self.max_radius,
            "max_threshold": self.max_threshold,
            "ast_size": ast,
            "expanded_size": expanded,
        }


class CaseTag(enum.Enum):
    CONNECTED = "connected"
    DISCONNECTED = "disconnected"


@dataclass(frozen=True)
class EliminationCase:
    tag: CaseTag
    p: int
    sigma: Sphere | None = None

    def __post_init__(self):
        if (self.tag is CaseTag.DISCONNECTED) != (self.sigma is not None):
            raise ValueError("sigma is present exactly in the disconnected case")


class CountMode(enum.Enum):
    APPEND_CENTER = "append"
    REPLACE_LAST = "replace"


@dataclass
class EliminationRecord:
    variable: str
    context_size: int
    radius_in: int
    radius_out: int
    spheres: int
    disjuncts: int
    groups: int
    distinct_rewrites: int
    seconds: float


@dataclass
class NormalizationStats:
    base_cases: list[dict] = field(default_factory=list)
    eliminations: list[EliminationRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "base_cases": list(self.base_cases),
            "eliminations": [vars(r) for r in self.eliminations],
        }


# -- simplification -------------------------------------------------------------


def _and(children: Sequence[Formula]) -> Formula:
    seen: dict[Formula, None] = {}
    for c in children:
        if isinstance(c, And):
            for g in c.children:
                seen.setdefault(g)
        elif isinstance(c, FalseConst):
            return FALSE
        elif not isinstance(c, TrueConst):
            seen.setdefault(c)
    if not seen:
        return TRUE
    if len(seen) == 1:
        return next(iter(seen))
    return And(tuple(seen))


def _or(children: Sequence[Formula]) -> Formula:
    seen: dict[Formula, None] = {}
    for c in children:
        if isinstance(c, Or):
            for g in c.children:
                seen.setdefault(g)
        elif isinstance(c, TrueConst):
            return TRUE
        elif not isinstance(c, FalseConst):
            seen.setdefault(c)
    if not seen:
        return FALSE
    if len(seen) == 1:
        return next(iter(seen))
    return Or(tuple(seen))


def _not(child: Formula) -> Formula:
    if isinstance(child, TrueConst):
        return FALSE
    if isinstance(child, FalseConst):
        return TRUE
    if isinstance(child, Not):
        return child.child
    return Not(child)


def simplify(F: Formula, f: int | None = None) -> Formula:
    """Constant propagation, flattening and duplicate removal.

    Hanf atoms with threshold 0 become true; with ``f`` given, atoms whose
    sphere has degree above ``f`` become false.
    """
    if isinstance(F, HanfAtom):
        if F.threshold == 0:
            return TRUE
        if f is not None and F.sphere.degree > f:
            return FALSE
        return F
    if isinstance(F, Not):
        return _not(simplify(F.child, f))
    if isinstance(F, And):
        return _and([simplify(c, f) for c in F.children])
    if isinstance(F, Or):
        return _or([simplify(c, f) for c in F.children])
    if isinstance(F, (Exists, Forall)):
        body = simplify(F.body, f)
        if isinstance(body, (TrueConst, FalseConst)):
            return body  # universes are nonempty
        return type(F)(F.var, body)
    return F


# -- quantifier-free base case -------------------------------------------------------


def _eval_qf(F: Formula, s: Sphere, env: dict[str, int]) -> bool:
    if isinstance(F, TrueConst):
        return True
    if isinstance(F, FalseConst):
        return False
    if isinstance(F, RelAtom):
        return s.carrier.holds(F.name, [env[v] for v in F.args])
    if isinstance(F, EqAtom):
        return env[F.left] == env[F.right]
    if isinstance(F, Not):
        return not _eval_qf(F.child, s, env)
    if isinstance(F, And):
        return all(_eval_qf(c, s, env) for c in F.children)
    if isinstance(F, Or):
        return any(_eval_qf(c, s, env) for c in F.children)
    raise HanfError(f"not quantifier free: {type(F).__name__}")


def witness_name(context: Sequence[str]) -> str:
    taken = set(context)
    if "w" not in taken:
        return "w"
    i = 1
    while f"w{i}" in taken:
        i += 1
    return f"w{i}"


def base_case_qf(
    phi: Formula,
    context: Sequence[str],
    cfg: NormalizationConfig,
    stats: NormalizationStats | None = None,
) -> HnfFormula:
    """Disjunction of ``exists^{>=1} w: sph_tau`` over 1-spheres ``tau`` whose
    first ``n`` centers satisfy ``phi``."""
    context = tuple(context)
    if not is_quantifier_free(phi):
        raise HanfError("base case needs a quantifier-free formula")
    extra = set(free_variables(phi)) - set(context)
    if extra:
        raise HanfError(f"free variables {sorted(extra)} missing from context {context}")
    phi = simplify(phi)
    if isinstance(phi, (TrueConst, FalseConst)):
        return HnfFormula(phi, context)
    taus = enumerate_spheres(
        cfg.signature, 1, len(context) + 1, cfg.f,
        max_spheres=cfg.max_spheres, max_carrier=cfg.max_carrier,
    )
    w = witness_name(context)
    atoms = [
        HanfAtom(1, w, t, context)
        for t in taus
        if _eval_qf(phi, t, dict(zip(context, t.centers)))
    ]
    if stats is not None:
        stats.base_cases.append({"context_size": len(context), "spheres": len(taus), "kept": len(atoms)})
    return HnfFormula(_or(atoms), context)


# -- the elimination step --------------------------------------------------------


def count_in_sphere(tau_p: Sphere, pattern: Sphere, mode: CountMode) -> int:
    """Candidates ``c`` near the last center of ``tau_p`` matching ``pattern``.

    Candidates lie at distance ``< 2 * pattern.radius`` from the last center.
    ``APPEND_CENTER`` compares the sphere around all centers of ``tau_p``
    plus ``c``; ``REPLACE_LAST`` replaces the last center by ``c``.
    """
    D = pattern.radius
    A = tau_p.carrier
    last = tau_p.centers[-1]
    if mode is CountMode.APPEND_CENTER:
        if pattern.n_centers != tau_p.n_centers + 1:
            raise HanfError("pattern needs one more center than the host sphere")
        prefix = tau_p.centers
    else:
        if pattern.n_centers != tau_p.n_centers:
            raise HanfError("pattern needs as many centers as the host sphere")
        prefix = tau_p.centers[:-1]
    target = pattern.code
    return sum(
        1
        for c in sorted(A.distances_from((last,), 2 * D - 1))
        if sphere_code(A, prefix + (c,), D) == target
    )


@dataclass(frozen=True)
class _AtomInfo:
    atom: HanfAtom
    radius: int
    connected: bool
    code: bytes  # code of tau (connected case)
    sigma: Sphere | None = None
    sigma_code: bytes | None = None
    rho_code: bytes | None = None  # code of the sphere around x-bar and x_{n+1}


def _analyse(atom: HanfAtom) -> _AtomInfo:
    tau = atom.sphere
    D = tau.radius
    cs = tau.centers
    n = len(cs) - 2
    pair = extract_sphere(tau.carrier, (cs[n], cs[n + 1]), D)
    if is_connected(pair):
        return _AtomInfo(atom, D, True, tau.code)
    sigma = extract_sphere(tau.carrier, cs[:n] + (cs[n + 1],), D).canonical()
    rho = sphere_code(tau.carrier, cs[: n + 1], D)
    return _AtomInfo(atom, D, False, tau.code, sigma, sigma.code, rho)


def classify(atom: HanfAtom, tau_p: Sphere) -> EliminationCase:
    """Case and witness count ``p`` of ``atom`` relative to ``tau_p``."""
    info = _analyse(atom)
    _check_radius(info.radius, tau_p)
    if info.connected:
        return EliminationCase(CaseTag.CONNECTED, count_in_sphere(tau_p, atom.sphere, CountMode.APPEND_CENTER))
    p = count_in_sphere(tau_p, info.sigma, CountMode.REPLACE_LAST)
    return EliminationCase(CaseTag.DISCONNECTED, p, info.sigma)


def _check_radius(D: int, tau_p: Sphere):
    if tau_p.radius < 3 * D:
        raise HanfError(f"host sphere radius {tau_p.radius} < 3 * {D}")


def rewrite_hanf_atom(atom: HanfAtom, tau_p: Sphere, cfg: NormalizationConfig | None = None) -> Formula:
    """Replace ``atom`` (over context ``x-bar, x_{n+1}``) given that
    ``x-bar, x_{n+1}`` realizes ``tau_p``.

    Connected case: a constant.  Disconnected case: a Hanf atom over
    ``x-bar`` with sphere ``sigma`` and threshold ``m + p``, guarded by the
    requirement that ``tau_p`` agrees with the pattern around ``x-bar,
    x_{n+1}``; without that agreement no witness can exist and the result is
    false.
    """
    guard = True if cfg is None else cfg.guard_disconnected
    info = _analyse(atom)
    _check_radius(info.radius, tau_p)
    if info.connected:
        p = count_in_sphere(tau_p, atom.sphere, CountMode.APPEND_CENTER)
        return TRUE if p >= atom.threshold else FALSE
    if guard and sphere_code(tau_p.carrier, tau_p.centers, info.radius) != info.rho_code:
        return FALSE
    p = count_in_sphere(tau_p, info.sigma, CountMode.REPLACE_LAST)
    return HanfAtom(atom.threshold + p, atom.witness, info.sigma, atom.centers[:-1])


class _Skeleton:
    """Flattened Boolean skeleton for repeated sparse substitution.

    Every atom defaults to false.  Substituting a handful of atoms only
    rebuilds their ancestors; untouched subtrees collapse to their
    precomputed default value.
    """

    def __init__(self, F: Formula):
        self.kind: list[str] = []
        self.payload: list = []
        self.children: list[tuple[int, ...]] = []
        self.parent: list[int] = []
        self.atom_pos: dict[HanfAtom, list[int]] = defaultdict(list)
        self.root = self._add(F, -1)
        n = len(self.kind)
        self.default = [False] * n
        self.n_true = [0] * n
        for i in reversed(range(n)):  # children come after parents
            k = self.kind[i]
            if k == "const":
                self.default[i] = self.payload[i]
            elif k == "atom":
                self.default[i] = False
            elif k == "not":
                self.default[i] = not self.default[self.children[i][0]]
            else:
                t = sum(self.default[c] for c in self.children[i])
                self.n_true[i] = t
                self.default[i] = t > 0 if k == "or" else t == len(self.children[i])

    def _add(self, F: Formula, parent: int) -> int:
        i = len(self.kind)
        self.parent.append(parent)
        self.children.append(())
        if isinstance(F, (TrueConst, FalseConst)):
            self.kind.append("const")
            self.payload.append(isinstance(F, TrueConst))
        elif isinstance(F, HanfAtom):
            self.kind.append("atom")
            self.payload.append(F)
            self.atom_pos[F].append(i)
        elif isinstance(F, Not):
            self.kind.append("not")
            self.payload.append(None)
            self.children[i] = (self._add(F.child, i),)
        elif isinstance(F, (And, Or)):
            self.kind.append("and" if isinstance(F, And) else "or")
            self.payload.append(None)
            self.children[i] = tuple(self._add(c, i) for c in F.children)
        else:
            raise HanfError(f"{type(F).__name__} in a Hanf normal form skeleton")
        return i

    def substitute(self, values: dict[HanfAtom, Formula]) -> Formula:
        touched: set[int] = set()
        for atom in values:
            for i in self.atom_pos.get(atom, ()):
                while i >= 0 and i not in touched:
                    touched.add(i)
                    i = self.parent[i]
        if not touched:
            return TRUE if self.default[self.root] else FALSE
        return self._build(self.root, touched, values)

    def _build(self, i: int, touched: set[int], values) -> Formula:
        if i not in touched:
            return TRUE if self.default[i] else FALSE
        k = self.kind[i]
        if k == "atom":
            return values[self.payload[i]]
        if k == "not":
            return _not(self._build(self.children[i][0], touched, values))
        kids = [c for c in self.children[i] if c in touched]
        moved_true = sum(self.default[c] for c in kids)
        rest_true = self.n_true[i] - moved_true
        rest_count = len(self.children[i]) - len(kids)
        if k == "or":
            if rest_true > 0:
                return TRUE
            return _or([self._build(c, touched, values) for c in kids])
        if rest_true < rest_count:
            return FALSE
        return _and([self._build(c, touched, values) for c in kids])


_CANDIDATES: dict[tuple, tuple] = {}


def _candidate_codes(tp: Sphere, D: int) -> tuple[tuple[bytes, ...], tuple[bytes, ...], bytes]:
    """Sphere codes around the candidates ``c`` near the last center of ``tp``.

    Returns the codes for ``centers + (c,)``, for ``centers[:-1] + (c,)``
    and the code of the ``D``-sphere around ``centers`` itself.  Shared
    across eliminations, since they depend on ``tp`` and ``D`` only.
    """
    key = (tp.radius, tp.code, D)
    hit = _CANDIDATES.get(key)
    if hit is None:
        A = tp.carrier
        cands = sorted(A.distances_from((tp.centers[-1],), 2 * D - 1))
        prefix = tp.centers[:-1]
        hit = (
            tuple(sphere_code(A, tp.centers + (c,), D) for c in cands),
            tuple(sphere_code(A, prefix + (c,), D) for c in cands),
            sphere_code(A, tp.centers, D),
        )
        if len(_CANDIDATES) >= 1_000_000:
            _CANDIDATES.clear()
        _CANDIDATES[key] = hit
    return hit


def clear_caches() -> None:
    _CANDIDATES.clear()


def eliminate_exists(
    phi: HnfFormula,
    cfg: NormalizationConfig,
    stats: NormalizationStats | None = None,
) -> HnfFormula:
    """Remove the quantifier ``exists x_{n+1}`` in front of ``phi``.

    ``phi`` lives over the context ``x-bar, x_{n+1}``; the result lives over
    ``x-bar``.  Disjuncts are grouped by their rewritten body, so the output
    is ``OR_G (phi_G AND OR_{tau' in G} exists^{>=1} x_{n+1}: sph_tau')``.
    """
    started = time.perf_counter()
    if not phi.context:
        raise HanfError("nothing to eliminate: empty context")
    outer = phi.context[:-1]
    y = phi.context[-1]
    n = len(outer)
    F = simplify(phi.formula, cfg.f)
    if isinstance(F, (TrueConst, FalseConst)):
        return HnfFormula(F, outer)

    infos = [_analyse(a) for a in hanf_atoms(F)]
    d = max(i.radius for i in infos)
    e = 3 * d
    radii = sorted({i.radius for i in infos})
    conn_by_code: dict[int, dict[bytes, list[_AtomInfo]]] = {D: defaultdict(list) for D in radii}
    disc_by_rho: dict[int, dict[bytes | None, list[_AtomInfo]]] = {D: defaultdict(list) for D in radii}
    sigma_codes: dict[int, set[bytes]] = {D: set() for D in radii}
    for info in infos:
        if info.connected:
            conn_by_code[info.radius][info.code].append(info)
        else:
            rho = info.rho_code if cfg.guard_disconnected else None
            disc_by_rho[info.radius][rho].append(info)
            sigma_codes[info.radius].add(info.sigma_code)

    skeleton = _Skeleton(F)
    taus = enumerate_spheres(
        cfg.signature, e, n + 1, cfg.f,
        max_spheres=cfg.max_spheres, max_carrier=cfg.max_carrier,
    )

    rewrites: dict[tuple, Formula] = {}
    groups: dict[Formula, list[Sphere]] = {}
    disjuncts = 0
    for tp in taus:
        key = []
        values: dict[HanfAtom, Formula] = {}
        for D in radii:
            with_last, without_last, rho = _candidate_codes(tp, D)
            conn = conn_by_code[D]
            hits_a: Counter = Counter()
            if conn:
                hits_a.update(code for code in with_last if code in conn)
                for code, p in hits_a.items():
                    for info in conn[code]:
                        if p >= info.atom.threshold:
                            values[info.atom] = TRUE
            disc = disc_by_rho[D]
            hits_b: Counter = Counter()
            if not cfg.guard_disconnected:
                rho = None
            elif rho not in disc:
                rho = None
                disc = {}
            if disc:
                sc = sigma_codes[D]
                hits_b.update(code for code in without_last if code in sc)
                for info in disc[rho]:
                    a = info.atom
                    values[a] = HanfAtom(
                        a.threshold + hits_b.get(info.sigma_code, 0), a.witness, info.sigma, outer
                    )
            key.append((tuple(sorted(hits_a.items())), rho, tuple(sorted(hits_b.items()))))
        key = tuple(key)
        body = rewrites.get(key)
        if body is None:
            body = skeleton.substitute(values)
            rewrites[key] = body
        tp.slim()
        if isinstance(body, FalseConst):
            continue
        disjuncts += 1
        if disjuncts > cfg.max_disjuncts:
            raise BudgetExceeded(
                f"more than {cfg.max_disjuncts} disjuncts while eliminating {y}",
                {"variable": y, "radius": e, "spheres": len(taus), "disjuncts": disjuncts},
            )
        groups.setdefault(body, []).append(tp)

    parts = []
    for body, members in groups.items():
        guard = _or([HanfAtom(1, y, t, outer) for t in members])
        parts.append(_and([body, guard]))
    out = HnfFormula(_or(parts), outer)
    size = formula_size(out.formula)[0]
    if size > cfg.max_size:
        raise BudgetExceeded(
            f"output of eliminating {y} has {size} nodes, cap is {cfg.max_size}",
            {"variable": y, "radius": e, "ast_size": size},
        )
    if stats is not None:
        stats.eliminations.append(
            EliminationRecord(
                variable=y,
                context_size=len(phi.context),
                radius_in=d,
                radius_out=out.max_radius,
                spheres=len(taus),
                disjuncts=disjuncts,
                groups=len(groups),
                distinct_rewrites=len(rewrites),
                seconds=round(time.perf_counter() - started, 3),
            )
        )
    return out


# -- the driver ----------------------------------------------------------------------


def normalize(
    phi: Formula, cfg: NormalizationConfig, stats: NormalizationStats | None = None
) -> HnfFormula:
    """An ``f``-equivalent Hanf normal form over the free variables of ``phi``."""
    for G in iter_nodes(phi):
        if isinstance(G, RelAtom) and G.name not in cfg.signature:
            raise SignatureError(f"unknown relation symbol {G.name!r}")
        if isinstance(G, SphereAtom):
            raise HanfError("sphere atoms cannot be normalized; use Hanf atoms")
    phi = rename_apart(phi)
    context = tuple(free_variables(phi))
    if stats is None:
        stats = NormalizationStats()
    out = _normalize(phi, context, cfg, stats)
    return HnfFormula(simplify(out.formula, cfg.f), context)


def _normalize(F: Formula, V: tuple[str, ...], cfg: NormalizationConfig, stats) -> HnfFormula:
    if is_quantifier_free(F):
        return base_case_qf(F, V, cfg, stats)
    if isinstance(F, HanfAtom):
        if F.centers != V:
            raise HanfError(
                f"Hanf atom over {F.centers} cannot be used in context {V}; "
                "its center variables must be exactly the enclosing free variables"
            )
        return HnfFormula(simplify(F, cfg.f), V)
    if isinstance(F, Not):
        return HnfFormula(_not(_normalize(F.child, V, cfg, stats).formula), V)
    if isinstance(F, (And, Or)):
        kids = [_normalize(c, V, cfg, stats).formula for c in F.children]
        return HnfFormula(_and(kids) if isinstance(F, And) else _or(kids), V)
    if isinstance(F, Forall):
        return _normalize(Not(Exists(F.var, Not(F.body))), V, cfg, stats)
    if isinstance(F, Exists):
        if F.var in V:
            raise HanfError(f"bound variable {F.var} shadows the context")
        inner = _normalize(F.body, V + (F.var,), cfg, stats)
        return eliminate_exists(inner, cfg, stats)
    raise HanfError(f"cannot normalize {type(F).__name__}")
