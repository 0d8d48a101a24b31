import pytest
from hypothesis import given, strategies as st

from nodeval.agreement import (LIKERT, RatingVector, cohen_kappa, collapse_categories, contingency_table,
                               kappa_matrix, merge_mapping, parse_merge)


def rv(*values, categories=LIKERT):
    return RatingVector(values, categories)


def paired_ratings(min_size=1, max_size=80):
    return st.integers(min_size, max_size).flatmap(
        lambda n: st.tuples(st.lists(st.integers(1, 5), min_size=n, max_size=n),
                            st.lists(st.integers(1, 5), min_size=n, max_size=n)))


def test_merge_rule_maps_example():
    mapping = merge_mapping(LIKERT, parse_merge("3:2"))
    assert mapping == {1: 1, 2: 2, 3: 2, 4: 3, 5: 4}
    assert collapse_categories(rv(1, 3, 2, 5), mapping).values == (1, 2, 2, 4)


def test_merge_leaves_four_categories():
    out = collapse_categories(rv(1, 2, 3, 4, 5), merge_mapping(LIKERT, [(3, 2)]))
    assert out.categories == (1, 2, 3, 4)


def test_no_merge_is_identity():
    assert merge_mapping(LIKERT, []) == {c: c for c in LIKERT}
    assert parse_merge("") == []


def test_chained_merges():
    mapping = merge_mapping(LIKERT, parse_merge("3:2,5:4"))
    assert mapping == {1: 1, 2: 2, 3: 2, 4: 3, 5: 3}


@pytest.mark.parametrize("bad", ["3", "a:b", "3:2:1"])
def test_parse_merge_rejects(bad):
    with pytest.raises(ValueError):
        parse_merge(bad)


def test_merge_outside_scale_rejected():
    with pytest.raises(ValueError):
        merge_mapping(LIKERT, [(6, 2)])


def test_merge_cycle_rejected():
    with pytest.raises(ValueError):
        merge_mapping(LIKERT, [(2, 3), (3, 2)])


def test_rating_outside_scale_rejected():
    with pytest.raises(ValueError):
        rv(1, 6)


def test_perfect_agreement():
    a = rv(1, 2, 3, 4, 5, 1, 2)
    assert cohen_kappa(a, a).kappa == 1.0


def test_uniform_independence_is_zero():
    # every cell of a 5x5 table filled once
    a = rv(*[i for i in LIKERT for _ in LIKERT])
    b = rv(*[j for _ in LIKERT for j in LIKERT])
    r = cohen_kappa(a, b)
    assert (r.contingency == 1).all()
    assert abs(r.kappa) <= 1e-12


def test_four_case_worked_example():
    r = cohen_kappa(rv(1, 1, 2, 2), rv(1, 2, 1, 2))
    assert r.observed == 0.5 and r.expected == 0.5
    assert abs(r.kappa) <= 1e-12


def test_hand_computed_kappa():
    # table [[20, 5], [10, 15]]: p_o = 0.7, p_e = 0.5
    a = rv(*([1] * 25 + [2] * 25), categories=(1, 2))
    b = rv(*([1] * 20 + [2] * 5 + [1] * 10 + [2] * 15), categories=(1, 2))
    assert contingency_table(a, b).tolist() == [[20, 5], [10, 15]]
    assert cohen_kappa(a, b).kappa == pytest.approx(0.4, abs=1e-12)


def test_degenerate_constant_raters():
    r = cohen_kappa(rv(3, 3, 3), rv(3, 3, 3))
    assert r.kappa == 1.0 and r.degenerate


def test_length_mismatch():
    with pytest.raises(ValueError):
        cohen_kappa(rv(1, 2), rv(1, 2, 3))


def test_category_space_mismatch():
    with pytest.raises(ValueError):
        cohen_kappa(rv(1, 2, categories=(1, 2)), rv(1, 2))


@given(paired_ratings())
def test_kappa_symmetric(pair):
    a, b = rv(*pair[0]), rv(*pair[1])
    assert cohen_kappa(a, b).kappa == cohen_kappa(b, a).kappa


@given(paired_ratings(), st.randoms(use_true_random=False))
def test_kappa_case_permutation_invariant(pair, rnd):
    order = list(range(len(pair[0])))
    rnd.shuffle(order)
    a, b = rv(*pair[0]), rv(*pair[1])
    pa, pb = rv(*[pair[0][i] for i in order]), rv(*[pair[1][i] for i in order])
    assert cohen_kappa(pa, pb).kappa == pytest.approx(cohen_kappa(a, b).kappa, abs=1e-12)


@given(paired_ratings())
def test_kappa_bounded(pair):
    k = cohen_kappa(rv(*pair[0]), rv(*pair[1])).kappa
    assert -1.0 - 1e-12 <= k <= 1.0 + 1e-12


@given(st.lists(st.integers(1, 5), min_size=1, max_size=40))
def test_collapse_composition(values):
    first = merge_mapping(LIKERT, [(3, 2)])
    collapsed = collapse_categories(rv(*values), first)
    second = merge_mapping(collapsed.categories, [(4, 3)])
    twice = collapse_categories(collapsed, second)
    once = collapse_categories(rv(*values), {c: second[first[c]] for c in LIKERT})
    assert twice == once


def test_kappa_matrix_pairs():
    readers = [rv(1, 2, 3), rv(1, 2, 3), rv(3, 2, 1), rv(1, 1, 1)]
    km = kappa_matrix(readers)
    assert list(km) == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    assert km[(0, 1)].kappa == 1.0
    with pytest.raises(ValueError):
        kappa_matrix(readers[:1])
