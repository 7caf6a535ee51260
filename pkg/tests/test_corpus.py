import pytest

from hanf.corpus import (
    TreeSpec,
    coloring_from_set,
    complete_tree_coloring,
    components,
    make_cycle,
    make_forest,
    make_tree,
    tree_iso_distinguisher,
)
from hanf.evaluate import eval_fo, sphere_histogram
from hanf.formulas import free_variables, quantifier_rank
from hanf.structure import degree, disjoint_union


def test_height_zero_tree():
    A = make_tree(TreeSpec(0))
    assert A.size == 1 and degree(A) == 0


@pytest.mark.parametrize("h", range(5))
def test_complete_tree_counts(h):
    A = make_tree(TreeSpec(h))
    assert A.size == 2 ** (h + 1) - 1
    nbrs = [len(A.neighbors[v]) for v in A.universe]
    # root: 2 children, inner: parent + 2, leaves: parent only
    assert sorted(nbrs) == sorted([2] * (h > 0) + [3] * (2 ** h - 2) + [1] * (2 ** h) if h else [0])


def test_tree_coloring_and_edges():
    A = make_tree(TreeSpec(1, coloring_from_set(["", "1"])))
    assert A.holds("S0", (0, 1)) and A.holds("S1", (0, 2))
    assert A.relation("U") == {(0,), (2,)}


def test_tree_spec_validates_height():
    with pytest.raises(ValueError):
        TreeSpec(-1)


def test_forest_and_union():
    F = make_forest([TreeSpec(1), TreeSpec(2)])
    assert F.size == 3 + 7 and len(components(F)) == 2
    with pytest.raises(ValueError):
        make_forest([])


def test_cycle_examples():
    C = make_cycle(3)
    assert C.size == 3 and len(C.relation("E")) == 6 and degree(C) == 2
    for k in (4, 7, 12):
        C = make_cycle(k)
        assert degree(C) == 2
        assert len(sphere_histogram(C, 1, k)) == 1
    with pytest.raises(ValueError):
        make_cycle(2)


def test_union_doubles_histogram():
    C = make_cycle(3)
    one = sphere_histogram(C, 2, 10)
    two = sphere_histogram(disjoint_union(C, C), 2, 10)
    assert two == {code: 2 * k for code, k in one.items()}


# -- the distinguishing sentence ---------------------------------------------------


def components_iso_free(A, h) -> bool:
    """Oracle: no two complete height-``h`` components carry the same coloring."""
    seen = set()
    for comp in components(A):
        colors = complete_tree_coloring(A, comp, h)
        if colors is None:
            continue
        if colors in seen:
            return False
        seen.add(colors)
    return True


def test_distinguisher_is_a_sentence():
    F = tree_iso_distinguisher(1)
    assert free_variables(F) == [] and quantifier_rank(F) > 2
    with pytest.raises(ValueError):
        tree_iso_distinguisher(4)


def test_identical_trees_are_caught():
    spec = TreeSpec(1, coloring_from_set(["0"]))
    A = make_forest([spec, spec])
    assert not components_iso_free(A, 1)
    assert not eval_fo(A, {}, tree_iso_distinguisher(1))


def test_different_trees_pass():
    A = make_forest([TreeSpec(1, coloring_from_set(["0"])), TreeSpec(1, coloring_from_set(["1"]))])
    assert components_iso_free(A, 1)
    assert eval_fo(A, {}, tree_iso_distinguisher(1))


def test_single_tree_passes():
    assert eval_fo(make_tree(TreeSpec(2)), {}, tree_iso_distinguisher(2))


@pytest.mark.parametrize(
    "colorings",
    [
        [[], ["", "0"], ["1"]],
        [["0", "1"], ["0", "1"]],
        [[""], ["0"], ["1"], [""]],
    ],
)
def test_distinguisher_matches_oracle_on_forests(colorings):
    A = make_forest([TreeSpec(1, coloring_from_set(c)) for c in colorings] + [TreeSpec(0)])
    assert eval_fo(A, {}, tree_iso_distinguisher(1)) == components_iso_free(A, 1)


def test_distinguisher_height_two():
    a = TreeSpec(2, coloring_from_set(["00", "11"]))
    b = TreeSpec(2, coloring_from_set(["01", "11"]))
    assert eval_fo(make_forest([a, b]), {}, tree_iso_distinguisher(2))
    assert not eval_fo(make_forest([a, b, a]), {}, tree_iso_distinguisher(2))
