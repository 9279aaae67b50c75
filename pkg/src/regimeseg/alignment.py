"""Label alignment between predicted and reference sequences.

Cluster indices from independent labelings carry no correspondence, so
predicted labels are matched to reference labels by maximizing utterance
co-occurrence: build a negated co-occurrence cost matrix, zero-pad it
square, and solve the assignment problem. Dummy matches are discarded,
leaving a partial injective map; unmatched predicted labels are rewritten
to fresh integers past the reference range so they always count as errors
in label-identity metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import LabelSequence
from .errors import LengthMismatch


@dataclass(frozen=True)
class CostMatrix:
    """Negated co-occurrence counts, predicted labels as rows."""

    entries: np.ndarray
    M: int
    K: int

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.int64)
        if e.shape != (self.M, self.K):
            raise ValueError("entries shape inconsistent with (M, K)")
        if np.any(e > 0):
            raise ValueError("cost entries must be non-positive")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)


@dataclass(frozen=True)
class Assignment:
    """Partial injective map predicted-label -> reference-label.

    ``ref_label_count`` records the reference label space size so unmatched
    predicted labels can be rewritten past it.
    """

    mapping: dict[int, int]
    total_overlap: int
    ref_label_count: int

    def __post_init__(self):
        targets = list(self.mapping.values())
        if len(set(targets)) != len(targets):
            raise ValueError("assignment must be injective")
        object.__setattr__(self, "mapping", dict(self.mapping))


def build_cost_matrix(pred: LabelSequence, ref: LabelSequence) -> CostMatrix:
    """C[i, j] = -(number of utterances where pred==i and ref==j)."""
    if len(pred) != len(ref):
        raise LengthMismatch(f"pred length {len(pred)} != ref length {len(ref)}")
    M = int(pred.labels.max()) + 1
    K = int(ref.labels.max()) + 1
    counts = np.zeros((M, K), dtype=np.int64)
    np.add.at(counts, (pred.labels, ref.labels), 1)
    return CostMatrix(entries=-counts, M=M, K=K)


def _optimal_total(matrix: np.ndarray) -> int:
    rows, cols = linear_sum_assignment(matrix)
    return int(matrix[rows, cols].sum())


def solve_assignment(cost: CostMatrix) -> Assignment:
    """Optimal assignment on the zero-padded square matrix.

    Among equally optimal solutions, the one whose matched (i, j) pairs are
    lexicographically smallest is returned: rows are fixed in order, each
    taking the smallest feasible column.
    """
    n = max(cost.M, cost.K)
    padded = np.zeros((n, n), dtype=np.int64)
    padded[: cost.M, : cost.K] = cost.entries
    remaining = _optimal_total(padded)
    free_cols = list(range(n))
    chosen: list[int] = []
    for i in range(n):
        rest_rows = np.arange(i + 1, n)
        for j in free_cols:
            others = [c for c in free_cols if c != j]
            sub_total = (
                _optimal_total(padded[np.ix_(rest_rows, others)]) if rest_rows.size else 0
            )
            if padded[i, j] + sub_total == remaining:
                chosen.append(j)
                free_cols.remove(j)
                remaining -= padded[i, j]
                break
    mapping = {i: j for i, j in enumerate(chosen) if i < cost.M and j < cost.K}
    overlap = int(-sum(cost.entries[i, j] for i, j in mapping.items()))
    return Assignment(mapping=mapping, total_overlap=overlap, ref_label_count=cost.K)


def remap(pred: LabelSequence, assignment: Assignment) -> LabelSequence:
    """Rewrite predicted labels into the reference label space.

    Matched labels take their reference counterpart; unmatched ones take
    fresh integers starting at the reference label count, in ascending
    order of the original predicted label.
    """
    table: dict[int, int] = dict(assignment.mapping)
    nxt = assignment.ref_label_count
    for lab in sorted(np.unique(pred.labels)):
        lab = int(lab)
        if lab not in table:
            table[lab] = nxt
            nxt += 1
    new = np.array([table[int(l)] for l in pred.labels], dtype=np.int64)
    return LabelSequence(new)


def align(pred: LabelSequence, ref: LabelSequence) -> tuple[LabelSequence, Assignment]:
    """Convenience wrapper: cost matrix, assignment, remapped prediction."""
    assignment = solve_assignment(build_cost_matrix(pred, ref))
    return remap(pred, assignment), assignment
