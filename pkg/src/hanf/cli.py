"""Command-line front end.

Exit codes: 0 success, 1 malformed input, 2 resource budget exceeded,
3 evaluation or usage error, 4 counterexample found by ``equiv``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import re
import sys
import time
from pathlib import Path

from . import __version__
from .corpus import TreeSpec, coloring_from_set, make_cycle, make_forest, make_tree
from .errors import BudgetExceeded, EvaluationError, HanfError, ParseError, SignatureError
from .evaluate import (
    EquivBudget,
    check_f_equiv,
    eval_fo,
    eval_hnf,
    format_histogram,
    random_structure,
    sphere_histogram,
)
from .formulas import Formula, free_variables, hanf_atoms, parse_formula, print_formula, sphere_sexpr
from .hnf import HnfFormula, NormalizationConfig, NormalizationStats, normalize
from .spheres import enumerate_spheres
from .structure import Signature, format_structure, parse_signature, parse_structure

EXIT_OK, EXIT_PARSE, EXIT_BUDGET, EXIT_EVAL, EXIT_COUNTEREXAMPLE = 0, 1, 2, 3, 4


def _read(path: str) -> str:
    return sys.stdin.read() if path == "-" else Path(path).read_text()


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _digest(*texts: str) -> str:
    h = hashlib.sha256()
    for t in texts:
        h.update(t.encode())
        h.update(b"\0")
    return h.hexdigest()


def _dump(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def _as_hnf(F: Formula) -> HnfFormula | None:
    """Read ``F`` as a Hanf normal form if it is one."""
    ctx = None
    for atom in hanf_atoms(F):
        if ctx is None:
            ctx = atom.centers
        elif atom.centers != ctx:
            return None
    try:
        return HnfFormula(F, ctx or ())
    except HanfError:
        return None


_REL_USE = re.compile(r"\(\s*rel\s+([^\s()]+)((?:\s+[^\s()]+)*)\s*\)")


def _infer_signature(structure_text: str, formula_text: str) -> Signature:
    arities: dict[str, int] = {}
    for line in structure_text.splitlines()[1:]:
        parts = line.split("#", 1)[0].split()
        if parts:
            arities.setdefault(parts[0], len(parts) - 1)
    for m in _REL_USE.finditer(formula_text):
        arities.setdefault(m.group(1), len(m.group(2).split()))
    try:
        return Signature(tuple(sorted(arities.items())))
    except SignatureError as exc:
        raise ParseError(str(exc)) from None


def _parse_assign(text: str | None) -> dict[str, int]:
    asg: dict[str, int] = {}
    if not text:
        return asg
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        name, eq, value = part.partition("=")
        if not eq or not name.strip():
            raise ParseError(f"bad assignment {part!r}; expected name=index")
        try:
            asg[name.strip()] = int(value)
        except ValueError:
            raise ParseError(f"bad element index in {part!r}") from None
    return asg


# -- subcommands -------------------------------------------------------------------


def cmd_normalize(args) -> int:
    sig_text, phi_text = _read(args.sig), _read(args.formula)
    sig = parse_signature(sig_text)
    phi = parse_formula(phi_text, sig)
    cfg = NormalizationConfig(
        sig,
        args.degree,
        max_spheres=args.budget_spheres,
        max_carrier=args.budget_carrier,
        max_disjuncts=args.budget_disjuncts,
        max_size=args.budget_size,
        trace=args.trace,
    )
    stats = NormalizationStats()
    report = {
        "command": "normalize",
        "input_digest": _digest(sig_text, phi_text),
        "config": {
            "degree": cfg.f,
            "max_spheres": cfg.max_spheres,
            "max_carrier": cfg.max_carrier,
            "max_disjuncts": cfg.max_disjuncts,
            "max_size": cfg.max_size,
        },
        "input": {"free_variables": free_variables(phi)},
    }
    started = time.perf_counter()
    try:
        out = normalize(phi, cfg, stats)
    except BudgetExceeded as exc:
        report["status"] = "budget_exceeded"
        report["error"] = str(exc)
        report["partial"] = _stats_dict(stats, args.timings)
        report["partial"]["limit"] = exc.stats
        _emit_report(args, report)
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    elapsed = time.perf_counter() - started
    text = print_formula(out.formula, indent=1) + "\n"
    _write(args.out, text)
    q = len(stats.eliminations)
    metrics = out.metrics()
    report["status"] = "ok"
    report["output"] = dict(metrics, context=list(out.context), output_digest=_digest(text))
    report["eliminations"] = q
    report["radius_check"] = {
        "bound": 3 ** q,
        "max_radius": metrics["max_radius"],
        "ok": metrics["max_radius"] <= 3 ** q,
    }
    report["trace"] = _stats_dict(stats, args.timings)
    if args.timings:
        report["timing"] = {"normalize_seconds": round(elapsed, 3)}
    if args.trace:
        for rec in stats.eliminations:
            print(
                f"eliminate {rec.variable}: radius {rec.radius_in} -> {rec.radius_out}, "
                f"{rec.spheres} spheres, {rec.disjuncts} disjuncts in {rec.groups} groups",
                file=sys.stderr,
            )
    _emit_report(args, report)
    return EXIT_OK


def _stats_dict(stats: NormalizationStats, timings: bool) -> dict:
    d = stats.to_dict()
    if not timings:
        for rec in d["eliminations"]:
            rec.pop("seconds", None)
    return d


def _emit_report(args, report: dict) -> None:
    if getattr(args, "report", None):
        Path(args.report).write_text(_dump(report))


def cmd_eval(args) -> int:
    s_text, f_text = _read(args.structure), _read(args.formula)
    sig = parse_signature(_read(args.sig)) if args.sig else _infer_signature(s_text, f_text)
    A = parse_structure(s_text, sig)
    F = parse_formula(f_text, sig)
    asg = _parse_assign(args.assign)
    hnf = _as_hnf(F) if args.mode != "fo" else None
    if args.mode == "hnf" and hnf is None:
        raise EvaluationError("formula is not in Hanf normal form")
    value = eval_hnf(A, asg, hnf) if hnf is not None else eval_fo(A, asg, F)
    print("true" if value else "false")
    return EXIT_OK


def cmd_equiv(args) -> int:
    sig_text, a_text, b_text = _read(args.sig), _read(args.a), _read(args.b)
    sig = parse_signature(sig_text)
    A, B = parse_formula(a_text, sig), parse_formula(b_text, sig)
    variables = list(dict.fromkeys(free_variables(A) + free_variables(B)))
    budget = EquivBudget(
        exhaustive_max_size=args.exhaustive_size,
        sample_count=args.samples,
        sample_min_size=args.sample_min,
        sample_max_size=args.sample_max,
        seed=args.seed,
    )
    left = _as_hnf(A) or A
    right = _as_hnf(B) or B
    verdict = check_f_equiv(left, right, args.degree, sig, budget, variables=variables, jobs=args.jobs)
    report = {
        "command": "equiv",
        "input_digest": _digest(sig_text, a_text, b_text),
        "config": {
            "degree": args.degree,
            "exhaustive_size": budget.exhaustive_max_size,
            "samples": budget.sample_count,
            "sample_sizes": [budget.sample_min_size, budget.sample_max_size],
            "seed": budget.seed,
        },
        "verdict": verdict.status.value,
        "structures_checked": verdict.structures_checked,
        "assignments_checked": verdict.assignments_checked,
    }
    if verdict.equivalent:
        print(
            f"Equivalent (bounded: {verdict.structures_checked} structures, "
            f"{verdict.assignments_checked} assignments, degree <= {args.degree})"
        )
        _emit_report(args, report)
        return EXIT_OK
    structure, asg = verdict.witness
    report["counterexample"] = {
        "structure": format_structure(structure),
        "assignment": dict(sorted(asg.items())),
    }
    print("Counterexample")
    print("assignment: " + ",".join(f"{k}={v}" for k, v in sorted(asg.items())))
    sys.stdout.write(format_structure(structure))
    if args.counterexample_out:
        Path(args.counterexample_out).write_text(format_structure(structure))
    _emit_report(args, report)
    return EXIT_COUNTEREXAMPLE


def cmd_spheres(args) -> int:
    sig = parse_signature(_read(args.sig))
    spheres = enumerate_spheres(
        sig, args.radius, args.centers, args.degree,
        max_spheres=args.budget_spheres, max_carrier=args.budget_carrier,
    )
    for s in spheres:
        print(s.code.decode() if args.format == "code" else sphere_sexpr(s))
    return EXIT_OK


def cmd_histogram(args) -> int:
    s_text = _read(args.structure)
    sig = parse_signature(_read(args.sig))
    A = parse_structure(s_text, sig)
    sys.stdout.write(format_histogram(sphere_histogram(A, args.radius, args.cap)))
    return EXIT_OK


def _parse_tree_arg(text: str) -> TreeSpec:
    height, _, colored = text.partition(":")
    try:
        h = int(height)
    except ValueError:
        raise ParseError(f"bad tree height in {text!r}") from None
    addrs = [a.strip() for a in colored.split(",") if a.strip()]
    addrs = ["" if a == "root" else a for a in addrs]
    for a in addrs:
        if set(a) - {"0", "1"} or len(a) > h:
            raise ParseError(f"bad node address {a!r} for height {h}")
    return TreeSpec(h, coloring_from_set(addrs))


def cmd_gen(args) -> int:
    if args.kind == "cycle":
        A = make_cycle(args.k)
    elif args.kind == "tree":
        A = make_tree(_parse_tree_arg(args.tree))
    elif args.kind == "forest":
        A = make_forest([_parse_tree_arg(t) for t in args.tree])
    else:
        sig = parse_signature(_read(args.sig))
        A = random_structure(sig, args.size, args.degree, args.seed)
    _write(args.out, format_structure(A))
    return EXIT_OK


# -- wiring ------------------------------------------------------------------------


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _natural(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hanf", description="Hanf normal form compiler and oracles")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--jobs", type=_positive, default=1, help="worker processes for oracle checks")
    sub = p.add_subparsers(dest="command", required=True)

    n = sub.add_parser("normalize", help="compile a formula into Hanf normal form")
    n.add_argument("--sig", required=True)
    n.add_argument("--formula", required=True)
    n.add_argument("--degree", type=_natural, required=True)
    n.add_argument("--out")
    n.add_argument("--report")
    n.add_argument("--budget-spheres", type=_positive, default=250_000)
    n.add_argument("--budget-size", type=_positive, default=50_000_000, help="cap on output AST nodes")
    n.add_argument("--budget-carrier", type=_positive, default=64)
    n.add_argument("--budget-disjuncts", type=_positive, default=2_000_000)
    n.add_argument("--trace", action="store_true")
    n.add_argument("--timings", action="store_true", help="add wall-clock timings to the report")
    n.set_defaults(run=cmd_normalize)

    e = sub.add_parser("eval", help="evaluate a formula on a structure")
    e.add_argument("--structure", required=True)
    e.add_argument("--formula", required=True)
    e.add_argument("--sig")
    e.add_argument("--assign")
    e.add_argument("--mode", choices=("auto", "fo", "hnf"), default="auto")
    e.set_defaults(run=cmd_eval)

    q = sub.add_parser("equiv", help="bounded f-equivalence check")
    q.add_argument("--a", required=True)
    q.add_argument("--b", required=True)
    q.add_argument("--sig", required=True)
    q.add_argument("--degree", type=_natural, required=True)
    q.add_argument("--exhaustive-size", type=_natural, default=4)
    q.add_argument("--samples", type=_natural, default=200)
    q.add_argument("--sample-min", type=_positive, default=5)
    q.add_argument("--sample-max", type=_positive, default=8)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--report")
    q.add_argument("--counterexample-out")
    q.set_defaults(run=cmd_equiv)

    s = sub.add_parser("spheres", help="list sphere classes")
    s.add_argument("--sig", required=True)
    s.add_argument("--radius", type=_positive, required=True)
    s.add_argument("--centers", type=_positive, required=True)
    s.add_argument("--degree", type=_natural, required=True)
    s.add_argument("--format", choices=("sexpr", "code"), default="sexpr")
    s.add_argument("--budget-spheres", type=_positive, default=250_000)
    s.add_argument("--budget-carrier", type=_positive, default=64)
    s.set_defaults(run=cmd_spheres)

    h = sub.add_parser("histogram", help="capped counts of single-center spheres")
    h.add_argument("--sig", required=True)
    h.add_argument("--structure", required=True)
    h.add_argument("--radius", type=_positive, required=True)
    h.add_argument("--cap", type=_positive, required=True)
    h.set_defaults(run=cmd_histogram)

    g = sub.add_parser("gen", help="generate a structure file")
    g.add_argument("kind", choices=("cycle", "tree", "forest", "random"))
    g.add_argument("--k", type=int, default=3, help="cycle length")
    g.add_argument(
        "--tree", action="append", default=None,
        help="HEIGHT[:ADDR,...] with U-colored node addresses ('root' for the root)",
    )
    g.add_argument("--sig")
    g.add_argument("--size", type=_positive, default=5)
    g.add_argument("--degree", type=_natural, default=2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(run=cmd_gen)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "gen":
        if args.kind == "tree":
            if not args.tree or len(args.tree) != 1:
                parser.error("gen tree needs exactly one --tree")
            args.tree = args.tree[0]
        elif args.kind == "forest" and not args.tree:
            parser.error("gen forest needs at least one --tree")
        elif args.kind == "random" and not args.sig:
            parser.error("gen random needs --sig")
    try:
        return args.run(args)
    except (ParseError, SignatureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (HanfError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EVAL


if __name__ == "__main__":
    sys.exit(main())
