import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import E_ONLY, EU, U_ONLY, build
from hanf.errors import BudgetExceeded, HanfError, SignatureError
from hanf.evaluate import EquivBudget, check_f_equiv, eval_fo, random_structure
from hanf.formulas import (
    FALSE,
    TRUE,
    And,
    HanfAtom,
    Or,
    RelAtom,
    SphereAtom,
    parse_formula,
)
from hanf.hnf import (
    CaseTag,
    CountMode,
    HnfFormula,
    NormalizationConfig,
    NormalizationStats,
    base_case_qf,
    classify,
    count_in_sphere,
    eliminate_exists,
    normalize,
    rewrite_hanf_atom,
    simplify,
)
from hanf.spheres import Sphere, enumerate_spheres, extract_sphere, is_isomorphic
from oracles import brute_extract, brute_witnesses, distance_matrix
from test_formulas import VARS, formulas

SMALL = EquivBudget(exhaustive_max_size=4, sample_count=30, seed=3)


def u_point(u: bool, centers=(0,), d=1) -> Sphere:
    return Sphere(build(U_ONLY, 1, U=[(0,)] if u else []), centers, d)


# -- simplification ----------------------------------------------------------------


def test_simplify_neutral_elements():
    F = RelAtom("U", ("x",))
    assert simplify(And((TRUE, F))) == F
    assert simplify(Or(())) == FALSE
    assert simplify(And(())) == TRUE


def test_simplify_hanf_atoms():
    assert simplify(HanfAtom(0, "y", u_point(True, (0, 0)), ("x",))) == TRUE
    star = Sphere(build(E_ONLY, 3, E=[(0, 1), (0, 2)]), (0, 0), 2)
    assert simplify(HanfAtom(1, "y", star, ("x",)), 1) == FALSE
    assert simplify(HanfAtom(1, "y", star, ("x",)), 2) != FALSE


@settings(max_examples=200, deadline=None)
@given(formulas(), st.integers(1, 5), st.integers(0, 2**31))
def test_simplify_preserves_truth(F, size, seed):
    A = random_structure(EU, size, 1, seed)
    rng = random.Random(seed)
    asg = {v: rng.randrange(size) for v in VARS}
    assert eval_fo(A, asg, simplify(F, 1)) == eval_fo(A, asg, F)


# -- base case ------------------------------------------------------------------------


def test_base_case_false():
    cfg = NormalizationConfig(U_ONLY, 1)
    assert base_case_qf(FALSE, ("x",), cfg).formula == FALSE


def test_base_case_tautology_is_true_everywhere():
    cfg = NormalizationConfig(U_ONLY, 0)
    psi = base_case_qf(parse_formula("(eq x1 x1)"), ("x1",), cfg)
    assert len(psi.atoms) == len(enumerate_spheres(U_ONLY, 1, 2, 0))
    assert check_f_equiv(psi, TRUE, 0, U_ONLY, SMALL, variables=["x1"]).equivalent


def test_base_case_keeps_spheres_with_first_center_in_u():
    cfg = NormalizationConfig(U_ONLY, 1)
    psi = base_case_qf(parse_formula("(rel U x1)"), ("x1",), cfg)
    kept = {a.sphere.code for a in psi.atoms}
    expect = {
        s.code for s in enumerate_spheres(U_ONLY, 1, 2, 1)
        if s.carrier.holds("U", (s.centers[0],))
    }
    assert kept == expect and len(kept) == 3


def test_base_case_rejects_quantifiers_and_missing_context():
    cfg = NormalizationConfig(U_ONLY, 1)
    with pytest.raises(HanfError):
        base_case_qf(parse_formula("(exists x (rel U x))"), (), cfg)
    with pytest.raises(HanfError):
        base_case_qf(parse_formula("(rel U z)"), ("x",), cfg)


# -- counting and the case split --------------------------------------------------


def test_count_in_sphere_examples():
    tp = u_point(True, (0,), 3)
    pattern = u_point(True, (0, 0), 1)
    assert count_in_sphere(tp, pattern, CountMode.APPEND_CENTER) == 1
    assert count_in_sphere(tp, u_point(False, (0, 0), 1), CountMode.APPEND_CENTER) == 0


def test_case_a_true_when_count_reaches_threshold():
    atom = HanfAtom(1, "y", u_point(True, (0, 0), 1), ("x",))
    tp = u_point(True, (0,), 3)
    assert classify(atom, tp).tag is CaseTag.CONNECTED
    assert rewrite_hanf_atom(atom, tp) == TRUE
    assert rewrite_hanf_atom(HanfAtom(2, "y", atom.sphere, ("x",)), tp) == FALSE


def test_case_b_with_p_zero_keeps_threshold():
    two = Sphere(build(U_ONLY, 2, U=[(1,)]), (0, 1), 1)  # x not in U, witness in U, apart
    atom = HanfAtom(3, "y", two, ("x",))
    tp = u_point(False, (0,), 3)
    case = classify(atom, tp)
    assert case.tag is CaseTag.DISCONNECTED and case.p == 0
    out = rewrite_hanf_atom(atom, tp)
    assert isinstance(out, HanfAtom) and out.threshold == 3 and out.centers == ()


def test_guard_rejects_inconsistent_host():
    two = Sphere(build(U_ONLY, 2, U=[(1,)]), (0, 1), 1)
    atom = HanfAtom(1, "y", two, ("x",))
    assert rewrite_hanf_atom(atom, u_point(True, (0,), 3)) == FALSE
    bare = NormalizationConfig(U_ONLY, 1, guard_disconnected=False)
    assert isinstance(rewrite_hanf_atom(atom, u_point(True, (0,), 3), bare), HanfAtom)


def test_rewrite_needs_large_enough_host():
    atom = HanfAtom(1, "y", u_point(True, (0, 0), 2), ("x",))
    with pytest.raises(HanfError):
        rewrite_hanf_atom(atom, u_point(True, (0,), 3))


@pytest.mark.parametrize("seed", range(40))
def test_p_is_bounded_by_candidate_ball(seed):
    rng = random.Random(seed)
    f = 2
    A = random_structure(E_ONLY, rng.randint(3, 9), f, seed)
    x, a, b = (rng.randrange(A.size) for _ in range(3))
    tau = extract_sphere(A, (x, a, b), 1)
    tp = extract_sphere(A, (x, a), 3)
    case = classify(HanfAtom(1, "y", tau, ("x", "x2")), tp)
    assert case.p <= len(A.distances_from((a,), 1))
    assert case.p <= 1 + f  # elements at distance < 2 from a


def test_p_can_exceed_f_to_the_2d_minus_1():
    # x isolated, a on a triangle: all three triangle nodes look alike next to x
    A = build(E_ONLY, 4, E=[(1, 2), (2, 1), (2, 3), (3, 2), (3, 1), (1, 3)])
    sigma = extract_sphere(A, (0, 1), 1)
    p = count_in_sphere(extract_sphere(A, (0, 1), 3), sigma, CountMode.REPLACE_LAST)
    assert p == 3 > 2 ** (2 * 1 - 1)


@pytest.mark.parametrize("seed", range(60))
def test_case_split_against_brute_force(seed):
    rng = random.Random(seed)
    f = rng.choice((1, 2))
    A = random_structure(EU, rng.randint(3, 8), f, seed)
    x, a, b = (rng.randrange(A.size) for _ in range(3))
    tau = brute_extract(A, (x, a, b), 1)
    tp = extract_sphere(A, (x, a), 3)
    atom = HanfAtom(1, "y", tau, ("x", "x2"))
    case = classify(atom, tp)
    realized = brute_witnesses(A, (x, a), atom.sphere)
    if case.tag is CaseTag.CONNECTED:
        assert case.p == realized
    else:
        dist = distance_matrix(A)
        near = [c for c in A.universe if dist[a][c] < 2]
        assert case.p == sum(is_isomorphic(brute_extract(A, (x, c), 1), case.sigma) for c in near)
        assert realized == brute_witnesses(A, (x,), case.sigma) - case.p


# -- the disconnected case: soundness guard and the known gap ------------------------


FAR_NON_U = "(exists y (and (not (rel U y)) (not (rel E x y)) (not (eq x y))))"


def test_unguarded_rewrite_is_unsound():
    phi = parse_formula(FAR_NON_U, EU)
    bare = normalize(phi, NormalizationConfig(EU, 1, guard_disconnected=False))
    verdict = check_f_equiv(phi, bare, 1, EU, SMALL)
    assert not verdict.equivalent
    guarded = normalize(phi, NormalizationConfig(EU, 1))
    assert check_f_equiv(phi, guarded, 1, EU, SMALL).equivalent


def test_disconnected_identity_breaks_at_degree_six():
    # x joined to a 6-cycle u1..u6; y hangs off u1, pendants off u3 and u4
    x, us, y, p3, p4 = 0, [1, 2, 3, 4, 5, 6], 7, 8, 9
    edges = [(x, u) for u in us] + [(us[i], us[(i + 1) % 6]) for i in range(6)]
    edges += [(us[0], y), (us[2], p3), (us[3], p4)]
    A = build(E_ONLY, 10, E=edges + [(b, a) for a, b in edges])
    tau = extract_sphere(A, (x, y, p3), 2)
    atom = HanfAtom(1, "w", tau, ("x", "y"))
    case = classify(atom, extract_sphere(A, (x, y), 6))
    assert case.tag is CaseTag.DISCONNECTED and case.p == 1
    realized = brute_witnesses(A, (x, y), atom.sphere)
    sigma_count = brute_witnesses(A, (x,), case.sigma)
    assert (realized, sigma_count) == (1, 3)
    assert sigma_count - case.p != realized


# -- elimination and normalization ----------------------------------------------------


def test_eliminate_false_stays_false():
    cfg = NormalizationConfig(U_ONLY, 1)
    assert eliminate_exists(HnfFormula(FALSE, ("x",)), cfg).formula == FALSE


def test_eliminate_coincident_u_gives_some_u():
    cfg = NormalizationConfig(U_ONLY, 1)
    phi = HnfFormula(HanfAtom(1, "x2", u_point(True, (0, 0), 1), ("x1",)), ("x1",))
    out = eliminate_exists(phi, cfg)
    assert out.context == () and out.max_radius <= 3
    some_u = parse_formula("(exists x (rel U x))")
    assert check_f_equiv(some_u, out, 1, U_ONLY, SMALL).equivalent


def test_normalize_true():
    assert normalize(TRUE, NormalizationConfig(U_ONLY, 1)).formula == TRUE


def test_normalize_some_u_over_u():
    phi = parse_formula("(exists x (rel U x))")
    stats = NormalizationStats()
    out = normalize(phi, NormalizationConfig(U_ONLY, 1), stats)
    assert out.max_radius == 3
    assert [r.radius_out for r in stats.eliminations] == [3]
    assert check_f_equiv(phi, out, 1, U_ONLY, EquivBudget()).equivalent


@pytest.mark.parametrize(
    "text",
    [
        "(exists y (and (rel E x y) (rel U y)))",
        "(forall y (or (not (rel E x y)) (rel U y)))",
        "(not (exists y (rel E y x)))",
    ],
)
def test_normalize_small_formulas(text):
    phi = parse_formula(text, EU)
    out = normalize(phi, NormalizationConfig(EU, 1))
    assert out.context == ("x",) and out.max_radius == 3
    assert check_f_equiv(phi, out, 1, EU, SMALL).equivalent


def test_normalize_rejects_bad_input():
    cfg = NormalizationConfig(U_ONLY, 1)
    with pytest.raises(SignatureError):
        normalize(parse_formula("(rel E x y)"), cfg)
    with pytest.raises(HanfError):
        normalize(SphereAtom(u_point(True), ("x",)), cfg)
    with pytest.raises(HanfError):
        normalize(parse_formula("(and (rel U z) (hanf 1 y (x) (sphere 1 2 1 (center 0 0) (center 1 0))))", U_ONLY), cfg)


def test_normalize_budget():
    phi = parse_formula("(exists y (rel E x y))")
    with pytest.raises(BudgetExceeded) as info:
        normalize(phi, NormalizationConfig(E_ONLY, 2, max_spheres=50))
    assert info.value.stats


def test_hnf_formula_validates_context():
    atom = HanfAtom(1, "y", u_point(True, (0, 0)), ("x",))
    with pytest.raises(HanfError):
        HnfFormula(atom, ("z",))
    with pytest.raises(HanfError):
        HnfFormula(RelAtom("U", ("x",)), ("x",))
    m = HnfFormula(And((atom, TRUE)), ("x",)).metrics()
    assert m["hanf_atoms"] == 1 and m["max_radius"] == 1
