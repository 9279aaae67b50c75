"""Agreement and regime-stability metrics for decoded label sequences.

Reference-based metrics (segment F1, boundary F1, NMI, temporal purity)
expect the prediction to have been aligned first; ``evaluate`` does this
internally. Intrinsic metrics describe one sequence on its own, optionally
against the observation geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .alignment import align
from .core import ConversationSeries, LabelSequence
from .errors import DegenerateInput, LengthMismatch


@dataclass(frozen=True)
class Segment:
    """A maximal run of one label: [start, end] inclusive."""

    label: int
    start: int
    end: int

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError("segment start must be <= end")

    def __len__(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class MetricReport:
    """The full metric battery for one decoded sequence.

    Reference-dependent fields are None when no reference was supplied.
    """

    mean_regime_duration: float
    single_utterance_fraction: float
    regime_shifts: int
    effective_regimes: int
    dominant_regime_share: float
    transition_entropy: float
    intra_regime_variance: float
    inter_regime_centroid_distance: float
    segment_f1: float | None = None
    boundary_f1: float | None = None
    nmi: float | None = None
    temporal_purity: float | None = None

    def to_dict(self) -> dict:
        """Flat mapping with exact field names; None fields omitted."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None:
                out[f.name] = v
        return out


def _as_labels(seq: LabelSequence) -> np.ndarray:
    return seq.labels


def segments(labels: LabelSequence) -> list[Segment]:
    """Run-length decomposition into maximal constant-label segments."""
    arr = _as_labels(labels)
    out: list[Segment] = []
    start = 0
    for t in range(1, len(arr)):
        if arr[t] != arr[t - 1]:
            out.append(Segment(int(arr[start]), start, t - 1))
            start = t
    out.append(Segment(int(arr[start]), start, len(arr) - 1))
    return out


def temporal_stats(labels: LabelSequence):
    """(mean duration, single-utterance fraction, shifts, effective regimes,
    dominant share)."""
    arr = _as_labels(labels)
    segs = segments(labels)
    n_segs = len(segs)
    mean_duration = len(arr) / n_segs
    single_fraction = sum(1 for s in segs if len(s) == 1) / n_segs
    shifts = n_segs - 1
    effective = int(np.unique(arr).size)
    dominant = int(np.bincount(arr).max()) / len(arr)
    return mean_duration, single_fraction, shifts, effective, dominant


def transition_entropy(labels: LabelSequence) -> float:
    """Occupancy-weighted mean entropy of the empirical bigram rows,
    normalized by log(effective regimes); 0 when fewer than 2 regimes."""
    arr = _as_labels(labels)
    if len(arr) < 2:
        raise DegenerateInput("transition entropy needs T >= 2")
    effective = int(np.unique(arr).size)
    if effective < 2:
        return 0.0
    n = int(arr.max()) + 1
    counts = np.zeros((n, n))
    np.add.at(counts, (arr[:-1], arr[1:]), 1.0)
    row_totals = counts.sum(axis=1)
    weighted = 0.0
    for j in range(n):
        if row_totals[j] == 0:
            continue
        p = counts[j] / row_totals[j]
        nz = p[p > 0]
        weighted += (row_totals[j] / (len(arr) - 1)) * float(-(nz * np.log(nz)).sum())
    value = weighted / math.log(effective)
    return float(min(max(value, 0.0), 1.0))


def temporal_purity(labels: LabelSequence, ref: LabelSequence) -> float:
    """Length-weighted max reference-label fraction per predicted segment."""
    if len(labels) != len(ref):
        raise LengthMismatch("temporal_purity needs equal lengths")
    rarr = _as_labels(ref)
    total = 0.0
    for seg in segments(labels):
        window = rarr[seg.start : seg.end + 1]
        purity = int(np.bincount(window).max()) / len(seg)
        total += purity * len(seg)
    return total / len(labels)


def nmi(a: LabelSequence, b: LabelSequence) -> float:
    """Normalized mutual information, I / sqrt(H(a) H(b)), natural log.

    Two constant sequences agree trivially (1.0); a constant against a
    varying one is uninformative (0.0).
    """
    if len(a) != len(b):
        raise LengthMismatch("nmi needs equal lengths")
    xa, xb = _as_labels(a), _as_labels(b)
    T = len(xa)
    ha = _entropy(xa)
    hb = _entropy(xb)
    if ha == 0.0 and hb == 0.0:
        return 1.0
    if ha == 0.0 or hb == 0.0:
        return 0.0
    joint: dict[tuple[int, int], int] = {}
    for i, j in zip(xa, xb):
        joint[(int(i), int(j))] = joint.get((int(i), int(j)), 0) + 1
    pa = np.bincount(xa) / T
    pb = np.bincount(xb) / T
    mi = 0.0
    for (i, j), c in joint.items():
        pij = c / T
        mi += pij * math.log(pij / (pa[i] * pb[j]))
    mi = max(mi, 0.0)
    return min(mi / math.sqrt(ha * hb), 1.0)


def _entropy(arr: np.ndarray) -> float:
    p = np.bincount(arr) / arr.shape[0]
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def segment_f1(pred_aligned: LabelSequence, ref: LabelSequence) -> float:
    """F1 over segment sets; a true positive needs identical label, start,
    and end."""
    if len(pred_aligned) != len(ref):
        raise LengthMismatch("segment_f1 needs equal lengths")
    pred_segs = set((s.label, s.start, s.end) for s in segments(pred_aligned))
    ref_segs = set((s.label, s.start, s.end) for s in segments(ref))
    tp = len(pred_segs & ref_segs)
    if tp == 0:
        return 0.0
    precision = tp / len(pred_segs)
    recall = tp / len(ref_segs)
    return 2 * precision * recall / (precision + recall)


def _boundaries(arr: np.ndarray) -> list[int]:
    return [t for t in range(1, len(arr)) if arr[t] != arr[t - 1]]


def boundary_f1(pred: LabelSequence, ref: LabelSequence, tol: int = 1) -> float:
    """F1 over regime-change positions with one-to-one matching within
    ``tol``; pairs are matched greedily, nearest first."""
    if len(pred) != len(ref):
        raise LengthMismatch("boundary_f1 needs equal lengths")
    pb = _boundaries(_as_labels(pred))
    rb = _boundaries(_as_labels(ref))
    if not pb and not rb:
        return 1.0
    if not pb or not rb:
        return 0.0
    candidates = sorted(
        ((abs(p - r), p, r) for p in pb for r in rb if abs(p - r) <= tol),
    )
    used_p: set[int] = set()
    used_r: set[int] = set()
    matched = 0
    for _, p, r in candidates:
        if p in used_p or r in used_r:
            continue
        used_p.add(p)
        used_r.add(r)
        matched += 1
    if matched == 0:
        return 0.0
    precision = matched / len(pb)
    recall = matched / len(rb)
    return 2 * precision * recall / (precision + recall)


def geometry_stats(labels: LabelSequence, series: ConversationSeries):
    """(intra-regime variance, inter-regime centroid distance) over the
    stacked channel space."""
    if len(labels) != len(series):
        raise LengthMismatch("geometry_stats needs equal lengths")
    arr = _as_labels(labels)
    x = series.stacked()
    uniq = np.unique(arr)
    centroids = {int(u): x[arr == u].mean(axis=0) for u in uniq}
    intra = 0.0
    for u in uniq:
        pts = x[arr == u]
        c = centroids[int(u)]
        intra += ((pts - c) ** 2).sum(axis=1).mean() * (pts.shape[0] / len(arr))
    if uniq.size < 2:
        inter = 0.0
    else:
        dists = [
            float(np.linalg.norm(centroids[int(a)] - centroids[int(b)]))
            for i, a in enumerate(uniq)
            for b in uniq[i + 1 :]
        ]
        inter = float(np.mean(dists))
    return float(intra), inter


def evaluate(
    pred: LabelSequence,
    ref: LabelSequence | None,
    series: ConversationSeries,
) -> MetricReport:
    """Run alignment (when a reference exists) and the full metric battery."""
    if len(pred) != len(series):
        raise LengthMismatch("prediction length != series length")
    if ref is not None and len(ref) != len(pred):
        raise LengthMismatch("reference length != prediction length")
    work = pred
    seg_f1 = bnd_f1 = info = purity = None
    if ref is not None:
        work, _ = align(pred, ref)
        seg_f1 = segment_f1(work, ref)
        bnd_f1 = boundary_f1(work, ref, tol=1)
        info = nmi(work, ref)
        purity = temporal_purity(work, ref)
    duration, single_frac, shifts, effective, dominant = temporal_stats(work)
    entropy = transition_entropy(work) if len(work) >= 2 else 0.0
    intra, inter = geometry_stats(work, series)
    return MetricReport(
        mean_regime_duration=duration,
        single_utterance_fraction=single_frac,
        regime_shifts=shifts,
        effective_regimes=effective,
        dominant_regime_share=dominant,
        transition_entropy=entropy,
        intra_regime_variance=intra,
        inter_regime_centroid_distance=inter,
        segment_f1=seg_f1,
        boundary_f1=bnd_f1,
        nmi=info,
        temporal_purity=purity,
    )


def aggregate_reports(reports: list[MetricReport]) -> dict[str, float]:
    """Unweighted mean of each present field across conversations."""
    if not reports:
        return {}
    keys = [f.name for f in fields(MetricReport)]
    out: dict[str, float] = {}
    for key in keys:
        vals = [getattr(r, key) for r in reports]
        if all(v is not None for v in vals):
            out[key] = float(np.mean([float(v) for v in vals]))
    return out
