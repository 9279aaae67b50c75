"""Synthetic conversations with known regime labels.

Labels follow a sticky Markov chain; observations are per-modality isotropic
Gaussians around configurable regime means. Serves as the ground-truth
oracle for recovery tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    ConversationSeries,
    LabelSequence,
    Modality,
    canonical_modalities,
    seeded_rng,
)


@dataclass(frozen=True)
class SynthConfig:
    """Generator knobs.

    ``means`` is either "auto" (regimes placed on a circle with pairwise
    separation >= ``min_separation``, default 3x the covariance scale) or an
    explicit array of shape (K, M, 2). With probability ``decoupling``, a
    channel's emission at a step is drawn from a uniformly random *other*
    regime's distribution.
    """

    k_true: int
    length: int
    self_transition: float
    covariance_scale: float = 1.0
    means: str | np.ndarray = "auto"
    min_separation: float | None = None
    modalities: tuple[Modality, ...] = (Modality.TEXT,)
    decoupling: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.k_true < 1:
            raise ValueError("k_true must be >= 1")
        if self.length < 1:
            raise ValueError("length must be >= 1")
        if not 0.0 < self.self_transition <= 1.0:
            raise ValueError("self_transition must be in (0, 1]")
        if self.covariance_scale <= 0:
            raise ValueError("covariance_scale must be > 0")
        if not 0.0 <= self.decoupling <= 1.0:
            raise ValueError("decoupling must be in [0, 1]")
        mods = canonical_modalities(self.modalities)
        if len(mods) != len(self.modalities):
            raise ValueError("duplicate modalities")
        object.__setattr__(self, "modalities", mods)

    def resolved_means(self) -> np.ndarray:
        """Regime means as a (K, M, 2) array."""
        M = len(self.modalities)
        if isinstance(self.means, str):
            if self.means != "auto":
                raise ValueError(f"unknown means spec {self.means!r}")
            sep = (
                self.min_separation
                if self.min_separation is not None
                else 3.0 * self.covariance_scale
            )
            return _circle_means(self.k_true, M, sep)
        arr = np.asarray(self.means, dtype=np.float64)
        if arr.shape != (self.k_true, M, 2):
            raise ValueError(f"means must have shape ({self.k_true}, {M}, 2)")
        return arr


def _circle_means(k: int, n_mod: int, separation: float) -> np.ndarray:
    """Regime centers on a circle whose chord between neighbors is
    ``separation``; one regime sits at the origin."""
    out = np.zeros((k, n_mod, 2))
    if k == 1:
        return out
    radius = separation / (2.0 * math.sin(math.pi / k))
    for i in range(k):
        angle = 2.0 * math.pi * i / k
        point = np.array([radius * math.cos(angle), radius * math.sin(angle)])
        out[i, :, :] = point
    return out


def generate(cfg: SynthConfig, id: str = "synth") -> tuple[ConversationSeries, LabelSequence]:
    """Draw one conversation and its true labels. Same seed, same output."""
    rng = seeded_rng(cfg.seed)
    K, T, M = cfg.k_true, cfg.length, len(cfg.modalities)
    means = cfg.resolved_means()

    labels = np.empty(T, dtype=np.int64)
    labels[0] = rng.integers(K)
    for t in range(1, T):
        if K == 1 or rng.random() < cfg.self_transition:
            labels[t] = labels[t - 1]
        else:
            step = rng.integers(1, K)  # uniform over the other K-1 regimes
            labels[t] = (labels[t - 1] + step) % K

    values = np.empty((T, M, 2))
    for t in range(T):
        for m in range(M):
            regime = labels[t]
            if cfg.decoupling > 0.0 and K > 1 and rng.random() < cfg.decoupling:
                regime = (regime + rng.integers(1, K)) % K
            values[t, m] = means[regime, m] + cfg.covariance_scale * rng.standard_normal(2)

    series = ConversationSeries(
        id=id, modalities=cfg.modalities, values=values, standardized=False
    )
    return series, LabelSequence(labels)
