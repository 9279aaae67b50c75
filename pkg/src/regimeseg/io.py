"""File ingestion and serialization.

Series files (CSV or JSON)
    CSV columns ``t,v_txt,a_txt[,v_aud,a_aud][,v_vid,a_vid]`` with a
    mandatory header; rows ordered with t contiguous from 0; the column
    pairs present define the channel set. The JSON alternative is an array
    of objects ``{"t": 0, "txt": [v, a], "aud": [v, a]}`` under the same
    uniformity rules.

Label files (CSV)
    ``t,label`` rows. String labels are interned to integers by first
    appearance; all-integer labels are densely re-indexed by value so an
    already-dense file passes through unchanged. Original tokens are kept
    as names.

Model files (JSON)
    Self-describing, versioned documents for fitted HMMs and sticky
    posteriors; ``read_model(write_model(x))`` reproduces every parameter
    exactly. Retained posterior samples are written only on request.

Everything is UTF-8; readers accept both LF and CRLF endings.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .core import (
    ConversationSeries,
    GaussianEmission,
    LabelSequence,
    Modality,
    apply_standardization,
    standardize,
)
from .errors import (
    InconsistentChannels,
    LengthMismatch,
    NonContiguousIndex,
    NonFiniteValue,
    ParseError,
    VersionMismatch,
)
from .gaussian_hmm import HmmModel
from .sticky import SampleSnapshot, StickyPosterior

FORMAT_VERSION = 1

_COLUMNS = {
    Modality.TEXT: ("v_txt", "a_txt"),
    Modality.AUDIO: ("v_aud", "a_aud"),
    Modality.VIDEO: ("v_vid", "a_vid"),
}


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    series_path: str
    labels_path: str | None = None


@dataclass(frozen=True)
class CorpusManifest:
    """A corpus: conversation ids, their files, and the standardization scope."""

    conversations: tuple[ManifestEntry, ...]
    standardization_scope: str = "per_conversation"

    def __post_init__(self):
        if self.standardization_scope not in ("per_conversation", "corpus"):
            raise ParseError(
                f"unknown standardization_scope {self.standardization_scope!r}"
            )
        ids = [c.id for c in self.conversations]
        if len(set(ids)) != len(ids):
            raise ParseError("conversation ids must be unique")
        object.__setattr__(self, "conversations", tuple(self.conversations))


def _parse_float(token: str, where: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{where}: cannot parse {token!r} as a number") from None
    if not math.isfinite(value):
        raise NonFiniteValue(f"{where}: non-finite value {token!r}")
    return value


def read_series(path: str, format: str | None = None) -> ConversationSeries:
    """Load one conversation's VA observations (unstandardized)."""
    fmt = format or _infer_format(path)
    if fmt == "csv":
        return _read_series_csv(path)
    if fmt == "json":
        return _read_series_json(path)
    raise ParseError(f"unknown series format {fmt!r}")


def _infer_format(path: str) -> str:
    ext = os.path.splitext(path)[1].lower()
    if ext == ".json":
        return "json"
    return "csv"


def _series_id(path: str) -> str:
    base = os.path.basename(path)
    for suffix in (".series.csv", ".series.json", ".csv", ".json"):
        if base.endswith(suffix):
            return base[: -len(suffix)]
    return base


def _read_series_csv(path: str) -> ConversationSeries:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise ParseError(f"{path}: empty series file")
    header = [c.strip() for c in rows[0]]
    if not header or header[0] != "t":
        raise ParseError(f"{path}: header must start with column 't'")
    modalities = []
    for mod, (vcol, acol) in _COLUMNS.items():
        has_v, has_a = vcol in header, acol in header
        if has_v != has_a:
            raise InconsistentChannels(f"{path}: {mod.value} columns must come in pairs")
        if has_v:
            modalities.append(mod)
    if not modalities:
        raise ParseError(f"{path}: no channel columns found")
    extra = set(header) - {"t"} - {c for m in modalities for c in _COLUMNS[m]}
    if extra:
        raise ParseError(f"{path}: unknown columns {sorted(extra)}")
    col_index = {name: i for i, name in enumerate(header)}
    values = np.empty((len(rows) - 1, len(modalities), 2))
    for r, row in enumerate(rows[1:]):
        where = f"{path}:row {r}"
        if len(row) != len(header):
            raise InconsistentChannels(f"{where}: expected {len(header)} fields, got {len(row)}")
        if any(not cell.strip() for cell in row):
            raise InconsistentChannels(f"{where}: empty field")
        t = _parse_float(row[col_index['t']], where)
        if t != r:
            raise NonContiguousIndex(f"{where}: t={row[col_index['t']]} (expected {r})")
        for j, mod in enumerate(modalities):
            vcol, acol = _COLUMNS[mod]
            values[r, j, 0] = _parse_float(row[col_index[vcol]], where)
            values[r, j, 1] = _parse_float(row[col_index[acol]], where)
    return ConversationSeries(
        id=_series_id(path), modalities=tuple(modalities), values=values
    )


def _read_series_json(path: str) -> ConversationSeries:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
    if not isinstance(doc, list) or not doc:
        raise ParseError(f"{path}: expected a non-empty array of observations")
    first = doc[0]
    modalities = [m for m in Modality if m.value in first]
    if not modalities:
        raise ParseError(f"{path}: no channel keys found")
    values = np.empty((len(doc), len(modalities), 2))
    for r, entry in enumerate(doc):
        where = f"{path}:entry {r}"
        if not isinstance(entry, dict) or "t" not in entry:
            raise ParseError(f"{where}: each entry needs a 't' key")
        if entry["t"] != r:
            raise NonContiguousIndex(f"{where}: t={entry['t']} (expected {r})")
        present = [m for m in Modality if m.value in entry]
        if present != modalities:
            raise InconsistentChannels(f"{where}: channel set differs from first entry")
        for j, mod in enumerate(modalities):
            pair = entry[mod.value]
            if not isinstance(pair, list) or len(pair) != 2:
                raise ParseError(f"{where}: {mod.value} must be a [valence, arousal] pair")
            for d in range(2):
                v = float(pair[d])
                if not math.isfinite(v):
                    raise NonFiniteValue(f"{where}: non-finite {mod.value} value")
                values[r, j, d] = v
    return ConversationSeries(
        id=_series_id(path), modalities=tuple(modalities), values=values
    )


def write_series(series: ConversationSeries, path: str, format: str | None = None) -> None:
    fmt = format or _infer_format(path)
    if fmt == "csv":
        header = ["t"] + [c for m in series.modalities for c in _COLUMNS[m]]
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for t in range(len(series)):
                cells = [str(t)]
                for j in range(len(series.modalities)):
                    cells.append(repr(float(series.values[t, j, 0])))
                    cells.append(repr(float(series.values[t, j, 1])))
                fh.write(",".join(cells) + "\n")
    elif fmt == "json":
        doc = []
        for t in range(len(series)):
            entry = {"t": t}
            for j, m in enumerate(series.modalities):
                entry[m.value] = [float(series.values[t, j, 0]), float(series.values[t, j, 1])]
            doc.append(entry)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
            fh.write("\n")
    else:
        raise ParseError(f"unknown series format {fmt!r}")


def read_labels(path: str) -> LabelSequence:
    """Load a reference or decoded label file."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise ParseError(f"{path}: empty label file")
    if [c.strip() for c in rows[0][:2]] == ["t", "label"]:
        rows = rows[1:]
    if not rows:
        raise ParseError(f"{path}: no label rows")
    tokens = []
    for r, row in enumerate(rows):
        if len(row) < 2:
            raise ParseError(f"{path}:row {r}: expected 't,label'")
        t = _parse_float(row[0], f"{path}:row {r}")
        if t != r:
            raise NonContiguousIndex(f"{path}:row {r}: t={row[0]} (expected {r})")
        tokens.append(row[1].strip())
    return intern_labels(tokens)


def intern_labels(tokens: list[str]) -> LabelSequence:
    """Map label tokens to dense integer indices.

    All-integer tokens are ranked by numeric value (dense files pass
    through unchanged); otherwise tokens are interned by first appearance.
    """
    try:
        numeric = [int(tok) for tok in tokens]
    except ValueError:
        numeric = None
    if numeric is not None:
        distinct = sorted(set(numeric))
        table = {v: i for i, v in enumerate(distinct)}
        labels = [table[v] for v in numeric]
        names = tuple(str(v) for v in distinct)
    else:
        table = {}
        labels = []
        for tok in tokens:
            if tok not in table:
                table[tok] = len(table)
            labels.append(table[tok])
        names = tuple(table)
    return LabelSequence(np.array(labels, dtype=np.int64), names=names)


def write_labels(labels: LabelSequence, path: str) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("t,label\n")
        for t, lab in enumerate(labels.labels):
            fh.write(f"{t},{int(lab)}\n")


def _emission_doc(e: GaussianEmission) -> dict:
    return {"mean": e.mean.tolist(), "cov": e.cov.tolist()}


def _emissions_doc(emissions, modalities) -> list:
    return [
        {m.value: _emission_doc(per_state[m]) for m in modalities} for per_state in emissions
    ]


def _packed_doc(means: np.ndarray, covs: np.ndarray, modalities) -> list:
    out = []
    for k in range(means.shape[0]):
        out.append(
            {
                m.value: {"mean": means[k, j].tolist(), "cov": covs[k, j].tolist()}
                for j, m in enumerate(modalities)
            }
        )
    return out


def _unpack_doc(doc: list, modalities) -> tuple[np.ndarray, np.ndarray]:
    K, M = len(doc), len(modalities)
    means = np.empty((K, M, 2))
    covs = np.empty((K, M, 2, 2))
    for k in range(K):
        for j, m in enumerate(modalities):
            means[k, j] = np.asarray(doc[k][m.value]["mean"], dtype=np.float64)
            covs[k, j] = np.asarray(doc[k][m.value]["cov"], dtype=np.float64)
    return means, covs


def regime_va_table(obj: HmmModel | StickyPosterior) -> list[dict]:
    """Reported-regime mean VA, averaged across modalities.

    For a sticky posterior, index i is the reported (valence-ascending)
    regime; for an HMM, index i is the raw state.
    """
    if isinstance(obj, StickyPosterior):
        return [
            {"valence": v, "arousal": a}
            for v, a in (obj.regime_va(i) for i in range(obj.effective_k))
        ]
    means, _ = obj.packed()
    return [
        {"valence": float(means[k, :, 0].mean()), "arousal": float(means[k, :, 1].mean())}
        for k in range(obj.K)
    ]


def write_model(obj: HmmModel | StickyPosterior, path: str, include_samples: bool = False) -> None:
    """Serialize a fitted model or posterior as versioned JSON."""
    if isinstance(obj, HmmModel):
        doc = {
            "format_version": FORMAT_VERSION,
            "kind": "gaussian_hmm",
            "modalities": [m.value for m in obj.modalities],
            "k": obj.K,
            "tied_covariance": obj.tied_covariance,
            "initial": obj.initial.tolist(),
            "transitions": obj.transitions.tolist(),
            "emissions": _emissions_doc(obj.emissions, obj.modalities),
            "regimes": regime_va_table(obj),
        }
    elif isinstance(obj, StickyPosterior):
        doc = {
            "format_version": FORMAT_VERSION,
            "kind": "sticky_posterior",
            "modalities": [m.value for m in obj.modalities],
            "k_max": obj.k_max,
            "posterior_mean": {
                "beta": obj.mean_beta.tolist(),
                "initial": obj.mean_init.tolist(),
                "transitions": obj.mean_pi.tolist(),
                "emissions": _packed_doc(obj.mean_means, obj.mean_covs, obj.modalities),
            },
            "labels": obj.labels.labels.tolist(),
            "effective_k": obj.effective_k,
            "regime_order": list(obj.regime_order),
            "regimes": regime_va_table(obj),
            "loglik_trace": obj.loglik_trace.tolist(),
        }
        if include_samples:
            doc["samples"] = [
                {
                    "z": s.z.tolist(),
                    "beta": s.beta.tolist(),
                    "pi": s.pi.tolist(),
                    "init": s.init.tolist(),
                    "emissions": _packed_doc(s.means, s.covs, obj.modalities),
                    "alpha": s.alpha,
                    "kappa": s.kappa,
                    "gamma": s.gamma,
                }
                for s in obj.samples
            ]
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def read_model(path: str) -> HmmModel | StickyPosterior:
    """Load a model document written by :func:`write_model`."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ParseError(f"{path}: missing format_version")
    if doc["format_version"] > FORMAT_VERSION:
        raise VersionMismatch(
            f"{path}: format version {doc['format_version']} > supported {FORMAT_VERSION}"
        )
    try:
        kind = doc["kind"]
        modalities = tuple(Modality(v) for v in doc["modalities"])
        if kind == "gaussian_hmm":
            return _read_hmm(doc, modalities)
        if kind == "sticky_posterior":
            return _read_sticky(doc, modalities)
    except (KeyError, ValueError, TypeError) as exc:
        raise ParseError(f"{path}: malformed model document ({exc})") from None
    raise ParseError(f"{path}: unknown model kind {kind!r}")


def _read_hmm(doc, modalities) -> HmmModel:
    tied = bool(doc["tied_covariance"])
    means, covs = _unpack_doc(doc["emissions"], modalities)
    emissions = []
    shared = {j: covs[0, j].copy() for j in range(len(modalities))} if tied else None
    for k in range(len(doc["emissions"])):
        per = {}
        for j, m in enumerate(modalities):
            cov = shared[j] if tied else covs[k, j]
            per[m] = GaussianEmission(mean=means[k, j], cov=cov)
        emissions.append(per)
    return HmmModel(
        initial=np.asarray(doc["initial"], dtype=np.float64),
        transitions=np.asarray(doc["transitions"], dtype=np.float64),
        emissions=tuple(emissions),
        tied_covariance=tied,
    )


def _read_sticky(doc, modalities) -> StickyPosterior:
    pm = doc["posterior_mean"]
    mean_means, mean_covs = _unpack_doc(pm["emissions"], modalities)
    samples = []
    for s in doc.get("samples", []):
        means, covs = _unpack_doc(s["emissions"], modalities)
        samples.append(
            SampleSnapshot(
                z=np.asarray(s["z"], dtype=np.int64),
                beta=np.asarray(s["beta"], dtype=np.float64),
                pi=np.asarray(s["pi"], dtype=np.float64),
                init=np.asarray(s["init"], dtype=np.float64),
                means=means,
                covs=covs,
                alpha=float(s["alpha"]),
                kappa=float(s["kappa"]),
                gamma=float(s["gamma"]),
            )
        )
    return StickyPosterior(
        samples=tuple(samples),
        mean_beta=np.asarray(pm["beta"], dtype=np.float64),
        mean_pi=np.asarray(pm["transitions"], dtype=np.float64),
        mean_init=np.asarray(pm["initial"], dtype=np.float64),
        mean_means=mean_means,
        mean_covs=mean_covs,
        labels=LabelSequence(np.asarray(doc["labels"], dtype=np.int64)),
        effective_k=int(doc["effective_k"]),
        regime_order=tuple(int(i) for i in doc["regime_order"]),
        loglik_trace=np.asarray(doc["loglik_trace"], dtype=np.float64),
        modalities=modalities,
        k_max=int(doc["k_max"]),
    )


def read_manifest(path: str) -> CorpusManifest:
    """Load and validate a corpus manifest; paths resolve relative to it."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
    if not isinstance(doc, dict) or "conversations" not in doc:
        raise ParseError(f"{path}: manifest needs a 'conversations' array")
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    for c in doc["conversations"]:
        series_path = os.path.join(base, c["series"])
        labels_path = os.path.join(base, c["labels"]) if c.get("labels") else None
        for p in (series_path, labels_path):
            if p is not None and not os.path.exists(p):
                raise ParseError(f"{path}: referenced file {p} does not exist")
        entries.append(ManifestEntry(id=c["id"], series_path=series_path, labels_path=labels_path))
    return CorpusManifest(
        conversations=tuple(entries),
        standardization_scope=doc.get("standardization_scope", "per_conversation"),
    )


@dataclass(frozen=True)
class LoadedConversation:
    id: str
    series: ConversationSeries  # standardized
    reference: LabelSequence | None


def load_corpus(manifest: CorpusManifest) -> list[LoadedConversation]:
    """Read every conversation and standardize per the manifest's scope."""
    raw = [(e, read_series(e.series_path)) for e in manifest.conversations]
    out = []
    if manifest.standardization_scope == "corpus":
        mods = raw[0][1].modalities
        for _, s in raw:
            if s.modalities != mods:
                raise InconsistentChannels("corpus standardization needs one shared channel set")
        pooled = np.concatenate([s.values for _, s in raw], axis=0)
        mean, std = pooled.mean(axis=0), pooled.std(axis=0)
        standardized = [apply_standardization(s, mean, std) for _, s in raw]
    else:
        standardized = [standardize(s) for _, s in raw]
    for (entry, _), series in zip(raw, standardized):
        ref = read_labels(entry.labels_path) if entry.labels_path else None
        if ref is not None and len(ref) != len(series):
            raise LengthMismatch(
                f"{entry.id}: labels length {len(ref)} != series length {len(series)}"
            )
        series = ConversationSeries(
            id=entry.id, modalities=series.modalities, values=series.values, standardized=True
        )
        out.append(LoadedConversation(id=entry.id, series=series, reference=ref))
    return out
