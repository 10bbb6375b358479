import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linescale.errors import DomainError
from linescale.support import (
    KDiagonal,
    KSpec,
    birkhoff_decompose,
    blocker_crossings,
    closed_classes_check,
    find_k_diagonal,
    has_k_diagonal,
    has_support,
    has_total_support,
    is_k_diagonal,
    k_positive_part,
    minimal_blocking_subset,
    positive_part,
    w_star,
)

from oracles import (
    STAR3,
    has_k_diagonal_by_search,
    k_diagonals_by_search,
    positive_part_by_enumeration,
    random_doubly_stochastic,
    random_pattern,
    support_by_enumeration,
)

A11 = np.array([[1.0, 1.0], [1.0, 0.0]])
STAR_K = KSpec({2, 3}, {2, 3})


def test_kspec_json_round_trip():
    K = KSpec({3, 1}, {2})
    assert K.to_json() == {"rows": [1, 3], "cols": [2]}
    assert KSpec.from_json(K.to_json()) == K
    with pytest.raises(DomainError):
        KSpec.from_json({"rows": [1], "cols": [], "extra": 1})
    with pytest.raises(DomainError):
        KSpec({4}, set()).check(3)


def test_has_support_examples():
    assert has_support(A11)
    assert not has_support(STAR3)
    assert has_support(np.eye(5))


def test_positive_part_examples():
    assert np.array_equal(positive_part(A11), [[0, 1], [1, 0]])
    assert np.array_equal(positive_part(np.eye(3)), np.eye(3))
    assert not np.any(positive_part(STAR3))


def test_total_support_examples():
    assert has_total_support([[0, 1], [1, 0]])
    assert not has_total_support(A11)
    assert has_total_support([[0.5, 0.5], [0.5, 0.5]])


def test_closed_classes_examples():
    assert closed_classes_check([[0, 1], [1, 0]])
    assert not closed_classes_check([[1, 1], [0, 1]])
    assert closed_classes_check(np.eye(4))


def test_k_diagonal_examples():
    diag = find_k_diagonal(STAR3, STAR_K)
    assert diag is not None
    assert set(diag) == {(2, 1), (3, 1), (1, 2), (1, 3)}
    assert not has_k_diagonal(STAR3, KSpec.full(3))
    assert has_k_diagonal(STAR3, KSpec(set(), set()))
    assert has_k_diagonal(np.eye(3), KSpec(set(), set()))


def test_k_positive_part_examples():
    W = np.random.default_rng(0).random((4, 4)) * (np.random.default_rng(1).random((4, 4)) < 0.6)
    W[np.arange(4), np.arange(4)] += 1.0
    assert np.array_equal(k_positive_part(W, KSpec.full(4)), positive_part(W))
    assert np.array_equal(k_positive_part(STAR3, STAR_K), STAR3)
    assert np.array_equal(k_positive_part(A11, KSpec({1}, set())), [[1, 1], [0, 0]])


def test_minimal_blocking_subset_example():
    B = minimal_blocking_subset(STAR3, KSpec.full(3))
    assert B in (KSpec({2, 3}, {1}), KSpec({1}, {2, 3}))
    with pytest.raises(DomainError):
        minimal_blocking_subset(np.eye(3), KSpec.full(3))


def test_minimal_blocker_is_minimal_against_search():
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 30:
        n = int(rng.integers(2, 5))
        W = random_pattern(rng, n, weights=False)
        K = KSpec.full(n)
        if has_support(W):
            continue
        B = minimal_blocking_subset(W, K)
        assert not has_k_diagonal_by_search(W, B.rows, B.cols)
        for elem in B.elements():
            smaller = B.without(elem)
            assert has_k_diagonal_by_search(W, smaller.rows, smaller.cols)
        checked += 1


def test_blocker_crossings_reports_leaving_entries():
    W = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=float)
    B = minimal_blocking_subset(W, KSpec.full(3))
    assert blocker_crossings(W, B)
    assert blocker_crossings(STAR3, KSpec({2, 3}, {1})) == []


def test_w_star_masks_unnamed_lines():
    W = np.arange(1, 10, dtype=float).reshape(3, 3)
    assert np.array_equal(w_star(W, KSpec({1}, {3})), [[1, 2, 3], [0, 0, 6], [0, 0, 9]])


def test_birkhoff_examples():
    dec = birkhoff_decompose([[0.5, 0.5], [0.5, 0.5]], KSpec.full(2))
    assert sorted(dec.weights) == [0.5, 0.5]
    assert {frozenset(d.cells) for _, d in dec.terms} == {
        frozenset({(1, 1), (2, 2)}),
        frozenset({(1, 2), (2, 1)}),
    }
    dec = birkhoff_decompose([[0, 1], [1, 0]], KSpec.full(2))
    assert len(dec.terms) == 1 and dec.weights[0] == 1.0
    with pytest.raises(DomainError, match="row 1"):
        birkhoff_decompose([[1, 1], [1, 0]], KSpec.full(2))


def test_birkhoff_random_term_bound():
    rng = np.random.default_rng(5)
    for _ in range(20):
        W = random_doubly_stochastic(rng, 5, terms=12)
        dec = birkhoff_decompose(W, KSpec.full(5))
        assert len(dec.terms) <= 17
        assert np.max(np.abs(dec.reconstruct(5) - W)) <= 1e-10


def test_has_support_matches_enumeration():
    rng = np.random.default_rng(11)
    for _ in range(200):
        n = int(rng.integers(1, 6))
        W = random_pattern(rng, n, weights=False)
        assert has_support(W) == support_by_enumeration(W)
        assert np.array_equal(positive_part(W), positive_part_by_enumeration(W))


def test_k_diagonal_and_k_part_match_search():
    rng = np.random.default_rng(12)
    for _ in range(60):
        n = int(rng.integers(1, 4))
        W = random_pattern(rng, n, weights=False)
        rows = {i + 1 for i in range(n) if rng.random() < 0.5}
        cols = {j + 1 for j in range(n) if rng.random() < 0.5}
        K = KSpec(rows, cols)
        diags = k_diagonals_by_search(W, rows, cols)
        found = find_k_diagonal(W, K)
        assert (found is not None) == bool(diags)
        if found is not None:
            assert frozenset(found.cells) in diags
            assert is_k_diagonal(found.cells, K)
        keep = np.zeros((n, n), dtype=bool)
        for d in diags:
            for i, j in d:
                keep[i - 1, j - 1] = True
        assert np.array_equal(k_positive_part(W, K) > 0, keep)


def test_is_k_diagonal():
    K = KSpec({1}, {2})
    assert is_k_diagonal([(1, 2)], K)
    assert is_k_diagonal([(1, 1), (3, 2)], K)
    assert not is_k_diagonal([(1, 1)], K)
    assert not is_k_diagonal([(1, 2), (3, 3)], K)


def test_k_diagonal_matrix_and_json():
    d = KDiagonal(frozenset({(2, 1), (1, 2)}))
    assert d.to_json() == [[1, 2], [2, 1]]
    assert np.array_equal(d.matrix(2), [[0, 1], [1, 0]])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_total_support_means_positive_part_is_identity(n, seed):
    rng = np.random.default_rng(seed)
    W = random_pattern(rng, n)
    pp = positive_part(W)
    assert has_total_support(W) == np.array_equal(pp, W)
    # the positive part itself always has total support or is null
    assert not np.any(pp) or has_total_support(pp[np.ix_(pp.any(1), pp.any(0))])
