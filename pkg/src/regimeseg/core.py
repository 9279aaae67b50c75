"""Domain types, per-channel standardization, and seeded randomness.

Every conversation is a sequence of utterance-level valence-arousal points,
one pair per modality channel. Arrays are stored float64 with shape
(T, n_modalities, 2) and marked read-only after construction; all types in
this module are immutable and safe to share across threads.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import AlreadyStandardized, EmptySeries, InconsistentChannels, NonFiniteValue

#: Added to the diagonal whenever a covariance is estimated or sampled,
#: so downstream Cholesky factorizations never see a rank-deficient matrix.
COV_JITTER = 1e-6

#: Channels with sample std below this are treated as constant.
CONSTANT_STD_EPS = 1e-12


class Modality(enum.Enum):
    """The three supported observation channels, in canonical order."""

    TEXT = "txt"
    AUDIO = "aud"
    VIDEO = "vid"


#: Canonical ordering used everywhere arrays are stacked per modality.
MODALITY_ORDER = (Modality.TEXT, Modality.AUDIO, Modality.VIDEO)


def canonical_modalities(modalities) -> tuple[Modality, ...]:
    """Sort a collection of modalities into canonical (txt, aud, vid) order."""
    mods = set(modalities)
    return tuple(m for m in MODALITY_ORDER if m in mods)


@dataclass(frozen=True)
class VAPoint:
    """A single valence-arousal estimate. Both fields must be finite."""

    valence: float
    arousal: float

    def __post_init__(self):
        if not (math.isfinite(self.valence) and math.isfinite(self.arousal)):
            raise NonFiniteValue(f"non-finite VA point ({self.valence}, {self.arousal})")

    def as_array(self) -> np.ndarray:
        return np.array([self.valence, self.arousal], dtype=np.float64)


@dataclass(frozen=True)
class Observation:
    """One utterance's VA points, keyed by modality. At least one channel."""

    channels: dict[Modality, VAPoint]

    def __post_init__(self):
        if not self.channels:
            raise ValueError("observation must carry at least one channel")

    @property
    def modalities(self) -> tuple[Modality, ...]:
        return canonical_modalities(self.channels)


@dataclass(frozen=True)
class ConversationSeries:
    """An ordered multimodal VA series for one conversation.

    ``values`` has shape (T, M, 2) with modalities in canonical order; every
    utterance carries the same channel set. ``standardized`` records whether
    the per-channel z-scoring has been applied.
    """

    id: str
    modalities: tuple[Modality, ...]
    values: np.ndarray
    standardized: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 3 or vals.shape[0] < 1:
            raise EmptySeries(f"series {self.id!r} has no observations")
        if vals.shape[1] != len(self.modalities) or vals.shape[2] != 2:
            raise ValueError(
                f"values shape {vals.shape} inconsistent with {len(self.modalities)} modalities"
            )
        if tuple(canonical_modalities(self.modalities)) != tuple(self.modalities):
            raise ValueError("modalities must be unique and in canonical order")
        if not np.all(np.isfinite(vals)):
            raise NonFiniteValue(f"series {self.id!r} contains non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "modalities", tuple(self.modalities))

    def __len__(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_observations(cls, id: str, observations, standardized: bool = False):
        obs = list(observations)
        if not obs:
            raise EmptySeries(f"series {id!r} has no observations")
        mods = obs[0].modalities
        vals = np.empty((len(obs), len(mods), 2), dtype=np.float64)
        for t, ob in enumerate(obs):
            if ob.modalities != mods:
                raise InconsistentChannels(
                    f"series {id!r}: utterance {t} channels {ob.modalities} != {mods}"
                )
            for j, m in enumerate(mods):
                p = ob.channels[m]
                vals[t, j, 0] = p.valence
                vals[t, j, 1] = p.arousal
        return cls(id=id, modalities=mods, values=vals, standardized=standardized)

    @property
    def observations(self) -> tuple[Observation, ...]:
        out = []
        for t in range(len(self)):
            out.append(
                Observation(
                    {
                        m: VAPoint(self.values[t, j, 0], self.values[t, j, 1])
                        for j, m in enumerate(self.modalities)
                    }
                )
            )
        return tuple(out)

    def stacked(self) -> np.ndarray:
        """Channel vectors concatenated per utterance, shape (T, 2*M)."""
        return self.values.reshape(len(self), -1)


@dataclass(frozen=True)
class LabelSequence:
    """One integer regime label per utterance."""

    labels: np.ndarray
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        arr = np.asarray(self.labels, dtype=np.int64)
        if arr.ndim != 1 or arr.shape[0] < 1:
            raise EmptySeries("label sequence is empty")
        if np.any(arr < 0):
            raise ValueError("labels must be non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)
        if self.names is not None:
            object.__setattr__(self, "names", tuple(self.names))

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def num_labels(self) -> int:
        return int(np.unique(self.labels).size)

    def name_of(self, label: int) -> str:
        if self.names is not None and 0 <= label < len(self.names):
            return self.names[label]
        return str(label)


@dataclass(frozen=True)
class GaussianEmission:
    """Mean and covariance of one 2-D Gaussian channel."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if mean.shape != (2,) or cov.shape != (2, 2):
            raise ValueError("emission must be 2-dimensional")
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(cov)):
            raise NonFiniteValue("non-finite emission parameters")
        if abs(cov[0, 1] - cov[1, 0]) > 1e-12:
            raise ValueError("covariance not symmetric within 1e-12")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("covariance not positive definite") from None
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


def jittered(cov: np.ndarray) -> np.ndarray:
    """Return ``cov`` with the standard diagonal jitter applied."""
    cov = np.asarray(cov, dtype=np.float64)
    return cov + COV_JITTER * np.eye(cov.shape[0])


def standardize(series: ConversationSeries) -> ConversationSeries:
    """Z-score each scalar channel-dimension independently over time.

    Uses the population standard deviation (divide by T). Constant channels
    map to all-zeros. Returns a new series with the flag set; the input is
    untouched.
    """
    if series.standardized:
        raise AlreadyStandardized(f"series {series.id!r} is already standardized")
    if len(series) < 1:
        raise EmptySeries(f"series {series.id!r} has no observations")
    mean = series.values.mean(axis=0)
    std = series.values.std(axis=0)
    return apply_standardization(series, mean, std)


def apply_standardization(
    series: ConversationSeries, mean: np.ndarray, std: np.ndarray
) -> ConversationSeries:
    """Standardize with externally supplied moments (corpus-wide scope).

    With corpus moments the per-series sample mean/std invariants need not
    hold; the flag still records that scaling happened.
    """
    if series.standardized:
        raise AlreadyStandardized(f"series {series.id!r} is already standardized")
    safe = np.where(std > CONSTANT_STD_EPS, std, 1.0)
    vals = (series.values - mean) / safe
    vals = np.where(std > CONSTANT_STD_EPS, vals, 0.0)
    return ConversationSeries(
        id=series.id, modalities=series.modalities, values=vals, standardized=True
    )


def seeded_rng(seed: int) -> np.random.Generator:
    """Deterministic random source; identical seeds give identical streams."""
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def derive_rng(seed: int, *stream: int) -> np.random.Generator:
    """Child random source for parallel work, keyed by (seed, stream indices)."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(stream)))


def derive_seed(seed: int, *stream: int) -> int:
    """A well-mixed child seed keyed by (seed, stream indices)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(stream))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
