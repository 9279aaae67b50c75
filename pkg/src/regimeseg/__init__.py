"""Segmentation of multimodal valence-arousal series into persistent emotional regimes."""

from .core import (
    ConversationSeries,
    GaussianEmission,
    LabelSequence,
    Modality,
    Observation,
    VAPoint,
    seeded_rng,
    standardize,
)

__version__ = "0.1.0"

__all__ = [
    "ConversationSeries",
    "GaussianEmission",
    "LabelSequence",
    "Modality",
    "Observation",
    "VAPoint",
    "seeded_rng",
    "standardize",
    "__version__",
]
