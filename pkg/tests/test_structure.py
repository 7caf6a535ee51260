import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import E_ONLY, EU, U_ONLY, build
from hanf.errors import ElementError, ParseError, SignatureError
from hanf.structure import (
    Signature,
    Structure,
    ball,
    degree,
    disjoint_union,
    distance,
    format_signature,
    format_structure,
    gaifman_adjacent,
    induced_substructure,
    parse_signature,
    parse_structure,
)
from oracles import distance_matrix

R3 = Signature.of(R=3)


def path(n: int) -> Structure:
    return build(E_ONLY, n, E=[(i, i + 1) for i in range(n - 1)])


@st.composite
def structures(draw, sig=EU, max_size=7):
    n = draw(st.integers(1, max_size))
    facts = {}
    for name, arity in sig.relations:
        tuples = st.tuples(*[st.integers(0, n - 1)] * arity)
        facts[name] = draw(st.lists(tuples, max_size=2 * n))
    return Structure.build(sig, n, facts)


# -- signatures and structures ----------------------------------------------------


def test_signature_rejects_duplicates_and_zero_arity():
    with pytest.raises(SignatureError):
        Signature((("E", 2), ("E", 1)))
    with pytest.raises(SignatureError):
        Signature((("P", 0),))


def test_signature_round_trip():
    assert parse_signature(format_signature(EU)) == EU


def test_structure_validates_elements():
    with pytest.raises(ElementError):
        build(E_ONLY, 2, E=[(0, 2)])
    with pytest.raises(ElementError):
        Structure.build(E_ONLY, 0, {})


def test_unknown_relation_in_build():
    with pytest.raises(SignatureError):
        build(E_ONLY, 2, U=[(0,)])


def test_structure_text_round_trip():
    A = build(EU, 3, E=[(0, 1), (2, 2)], U=[(1,)])
    assert parse_structure(format_structure(A), EU) == A


@pytest.mark.parametrize("text", ["", "structure x\n", "structure 2\nE 0 5\n", "structure 2\nF 0 1\n", "structure 2\nE 0\n"])
def test_structure_parse_errors(text):
    with pytest.raises(ParseError):
        parse_structure(text, EU)


# -- Gaifman graph --------------------------------------------------------------


def test_adjacent_single_edge():
    assert gaifman_adjacent(build(E_ONLY, 2, E=[(0, 1)]), 0, 1)


def test_self_loop_is_not_adjacency():
    assert not gaifman_adjacent(build(E_ONLY, 1, E=[(0, 0)]), 0, 0)


def test_ternary_tuple_makes_clique():
    A = build(R3, 3, R=[(0, 1, 2)])
    assert gaifman_adjacent(A, 0, 2)
    assert degree(A) == 2


def test_distance_examples():
    A = path(3)
    assert distance(A, 1, 1) == 0
    assert distance(A, 0, 2) == 2
    assert distance(build(E_ONLY, 2), 0, 1) == math.inf


def test_ball_examples():
    A = path(5)
    assert ball(A, (2,), 1) == {2}
    assert ball(A, (0, 4), 1) == {0, 4}
    assert ball(A, (2,), 2) == {1, 2, 3}
    assert ball(A, (0,), 5) == set(A.universe)


def test_degree_examples():
    assert degree(build(U_ONLY, 4, U=[(0,), (2,)])) == 0
    assert degree(build(E_ONLY, 5, E=[(i, (i + 1) % 5) for i in range(5)])) == 2
    assert degree(build(E_ONLY, 4, E=[(0, 1), (2, 0), (0, 3)])) == 3


def test_induced_substructure_examples():
    A = path(3)
    same, ren = induced_substructure(A, A.universe)
    assert same == A and ren == {0: 0, 1: 1, 2: 2}
    B, _ = induced_substructure(A, {0, 2})
    assert B.size == 2 and not B.relation("E")
    C, _ = induced_substructure(build(R3, 3, R=[(0, 1, 2)]), {0, 1})
    assert not C.relation("R")


def test_disjoint_union_renumbers_second():
    A = build(EU, 2, E=[(0, 1)])
    B = build(EU, 1, U=[(0,)])
    C = disjoint_union(A, B)
    assert C.size == 3 and C.holds("U", (2,)) and C.holds("E", (0, 1))


@settings(max_examples=150, deadline=None)
@given(structures())
def test_distances_match_floyd_warshall(A):
    dist = distance_matrix(A)
    for a in A.universe:
        for b in A.universe:
            assert distance(A, a, b) == dist[a][b]


@settings(max_examples=100, deadline=None)
@given(structures(), st.integers(1, 4), st.data())
def test_ball_matches_distance_oracle(A, d, data):
    centers = data.draw(st.lists(st.integers(0, A.size - 1), min_size=1, max_size=3))
    dist = distance_matrix(A)
    expect = {v for v in A.universe if min(dist[c][v] for c in centers) < d}
    assert ball(A, centers, d) == expect


@settings(max_examples=100, deadline=None)
@given(structures())
def test_degree_matches_neighbor_count(A):
    dist = distance_matrix(A)
    expect = max(sum(1 for b in A.universe if dist[a][b] == 1) for a in A.universe)
    assert degree(A) == expect
