"""Ambiguity-distribution NLI toolkit: corpus construction from multi-annotator
and regression-labeled sources, soft-target training, and divergence evaluation."""

from .dist import (
    GoldLabel,
    LabelCounts,
    LabelDistribution,
    entropy,
    jsd,
    kl,
    majority_label,
    normalize,
    soft_cross_entropy,
)
from .ingest import AnnotatedExample, Corpus, Source

__all__ = [
    "AnnotatedExample",
    "Corpus",
    "GoldLabel",
    "LabelCounts",
    "LabelDistribution",
    "Source",
    "entropy",
    "jsd",
    "kl",
    "majority_label",
    "normalize",
    "soft_cross_entropy",
]

__version__ = "0.1.0"
