import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regimeseg.alignment import (
    Assignment,
    CostMatrix,
    align,
    build_cost_matrix,
    remap,
    solve_assignment,
)
from regimeseg.core import LabelSequence
from regimeseg.errors import LengthMismatch
from regimeseg.metrics import nmi

L = LabelSequence


def brute_force_min_cost(entries, M, K):
    n = max(M, K)
    pad = np.zeros((n, n), dtype=np.int64)
    pad[:M, :K] = entries
    return min(sum(pad[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))


def test_cost_matrix_perfect_diagonal():
    c = build_cost_matrix(L([0, 0, 1, 1]), L([0, 0, 1, 1]))
    assert c.entries.tolist() == [[-2, 0], [0, -2]]


def test_cost_matrix_pure_swap():
    c = build_cost_matrix(L([0, 1, 0, 1]), L([1, 0, 1, 0]))
    assert c.entries.tolist() == [[0, -2], [-2, 0]]


def test_cost_matrix_one_row_spread():
    c = build_cost_matrix(L([0, 0, 0]), L([0, 1, 2]))
    assert c.entries.tolist() == [[-1, -1, -1]]
    assert (c.M, c.K) == (1, 3)


def test_cost_matrix_length_mismatch():
    with pytest.raises(LengthMismatch):
        build_cost_matrix(L([0, 1]), L([0, 1, 2]))


def test_solve_swap():
    a = solve_assignment(build_cost_matrix(L([0, 1, 0, 1]), L([1, 0, 1, 0])))
    assert a.mapping == {0: 1, 1: 0}
    assert a.total_overlap == 4


def test_solve_partial_lexicographic_tie_break():
    a = solve_assignment(CostMatrix(entries=np.array([[-1, -1, -1]]), M=1, K=3))
    assert a.mapping == {0: 0}
    assert a.total_overlap == 1


def test_solve_matches_permutation_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(100):
        M, K = rng.integers(1, 7, size=2)
        counts = rng.integers(0, 10, size=(int(M), int(K)))
        cost = CostMatrix(entries=-counts, M=int(M), K=int(K))
        a = solve_assignment(cost)
        assert -a.total_overlap == brute_force_min_cost(cost.entries, cost.M, cost.K)


def test_remap_swap():
    a = Assignment(mapping={0: 1, 1: 0}, total_overlap=4, ref_label_count=2)
    assert remap(L([0, 1, 0, 1]), a).labels.tolist() == [1, 0, 1, 0]


def test_remap_identity():
    a = Assignment(mapping={0: 0, 1: 1}, total_overlap=4, ref_label_count=2)
    assert remap(L([0, 1, 1, 0]), a).labels.tolist() == [0, 1, 1, 0]


def test_remap_unmatched_gets_first_fresh_integer():
    a = Assignment(mapping={0: 0, 1: 1}, total_overlap=3, ref_label_count=2)
    assert remap(L([0, 1, 2]), a).labels.tolist() == [0, 1, 2]
    b = Assignment(mapping={0: 1, 2: 0}, total_overlap=3, ref_label_count=2)
    assert remap(L([0, 1, 2]), b).labels.tolist() == [1, 2, 0]


def test_align_self_is_identity():
    rng = np.random.default_rng(1)
    labels = L(rng.integers(0, 4, size=30))
    remapped, assignment = align(labels, labels)
    assert np.array_equal(remapped.labels, labels.labels)
    assert assignment.total_overlap == 30
    present = set(int(x) for x in np.unique(labels.labels))
    assert all(assignment.mapping[i] == i for i in present)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.integers(0, 4), min_size=2, max_size=25),
    st.lists(st.integers(0, 4), min_size=2, max_size=25),
)
def test_remap_preserves_partition_and_nmi(pred_raw, ref_raw):
    n = min(len(pred_raw), len(ref_raw))
    pred, ref = L(pred_raw[:n]), L(ref_raw[:n])
    remapped, _ = align(pred, ref)
    assert len(remapped) == len(pred)
    # same equivalence classes of positions
    for a in range(n):
        for b in range(a + 1, n):
            assert (pred.labels[a] == pred.labels[b]) == (
                remapped.labels[a] == remapped.labels[b]
            )
    assert nmi(remapped, ref) == pytest.approx(nmi(pred, ref), abs=1e-12)


def test_assignment_rejects_non_injective():
    with pytest.raises(ValueError):
        Assignment(mapping={0: 1, 1: 1}, total_overlap=2, ref_label_count=2)


def test_overlap_equals_brute_force_maximum():
    rng = np.random.default_rng(2)
    for _ in range(50):
        T = int(rng.integers(4, 20))
        pred = L(rng.integers(0, 4, size=T))
        ref = L(rng.integers(0, 3, size=T))
        cost = build_cost_matrix(pred, ref)
        a = solve_assignment(cost)
        n = max(cost.M, cost.K)
        pad = np.zeros((n, n), dtype=np.int64)
        pad[: cost.M, : cost.K] = cost.entries
        best = -min(
            sum(pad[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n))
        )
        assert a.total_overlap == best
