"""Planted synthetic corpora with known true label distributions.

Each cluster owns a disjoint token vocabulary and a fixed distribution over
the three labels, so a bag-of-words model can invert the mapping exactly and
every directional claim about soft-versus-gold training has a ground truth.

Gold labels are the distribution's argmax, but on ambiguous examples (target
entropy above a threshold, or a tied argmax) the gold label is sampled from
the distribution instead: planted annotator noise of the kind that makes
majority labels misleading.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dist import LABEL_ORDER, GoldLabel, LabelCounts, LabelDistribution, entropy, normalize
from .ingest import AnnotatedExample, Corpus, Source
from .transfer import TaskItem
from .util import derive_seed

CORRUPT_ENTROPY_BITS = 0.6


@dataclass(frozen=True)
class PlantedCluster:
    name: str
    dist: LabelDistribution
    vocab: tuple[str, ...]


def _cluster_vocab(index: int, size: int = 8) -> tuple[str, ...]:
    return tuple(f"c{index:02d}w{j}" for j in range(size))


def _quantize_counts(dist: LabelDistribution, total: int = 100) -> LabelCounts:
    """Largest-remainder rounding of total*dist onto integer counts."""
    raw = [p * total for p in dist.as_tuple()]
    floors = [int(np.floor(x)) for x in raw]
    short = total - sum(floors)
    order = sorted(range(3), key=lambda i: raw[i] - floors[i], reverse=True)
    for i in order[:short]:
        floors[i] += 1
    return LabelCounts(*floors)


def default_clusters() -> list[PlantedCluster]:
    """A fixed mixture: unambiguous anchors, near-tied traps (neutral-heavy,
    echoing where human disagreement concentrates), and moderately skewed
    clusters."""
    patterns: list[tuple[float, float, float]] = []
    # anchors: one dominant label, entropy below the corruption threshold
    patterns += [(0.92, 0.05, 0.03), (0.05, 0.92, 0.03), (0.03, 0.05, 0.92)] * 2
    # traps: mode barely ahead of the runner-up; most have a neutral mode
    patterns += [
        (0.38, 0.50, 0.12),
        (0.12, 0.50, 0.38),
        (0.36, 0.48, 0.16),
        (0.16, 0.48, 0.36),
        (0.40, 0.52, 0.08),
        (0.10, 0.46, 0.44),
        (0.50, 0.38, 0.12),
        (0.52, 0.40, 0.08),
        (0.46, 0.42, 0.12),
        (0.12, 0.38, 0.50),
        (0.08, 0.40, 0.52),
        (0.12, 0.42, 0.46),
    ]
    # steeper but still ambiguous clusters
    patterns += [
        (0.62, 0.28, 0.10),
        (0.28, 0.62, 0.10),
        (0.10, 0.28, 0.62),
        (0.62, 0.10, 0.28),
        (0.10, 0.62, 0.28),
        (0.28, 0.10, 0.62),
    ]
    return [
        PlantedCluster(f"cluster{i:02d}", LabelDistribution(*p), _cluster_vocab(i))
        for i, p in enumerate(patterns)
    ]


def _example_texts(
    cluster: PlantedCluster, rng: np.random.Generator
) -> tuple[str, str]:
    premise = [str(rng.choice(cluster.vocab)) for _ in range(5)]
    hypothesis = [str(rng.choice(cluster.vocab)) for _ in range(4)]
    premise.append(f"fill{rng.integers(0, 6)}")
    hypothesis.append(f"fill{rng.integers(0, 6)}")
    return " ".join(premise), " ".join(hypothesis)


def _corrupted_gold(
    target: LabelDistribution, rng: np.random.Generator, threshold_bits: float
) -> GoldLabel:
    ps = sorted(target.as_tuple(), reverse=True)
    tied = ps[0] - ps[1] < 1e-9
    if entropy(target) > threshold_bits or tied:
        return LABEL_ORDER[int(rng.choice(3, p=np.array(target.as_tuple())))]
    return target.argmax()


def planted_corpus(
    clusters: list[PlantedCluster],
    n_per_cluster: int,
    seed: int,
    name: str = "planted",
    uid_prefix: str = "synth",
    corrupt_threshold_bits: float = CORRUPT_ENTROPY_BITS,
) -> Corpus:
    """Sample a corpus: counts quantized to 100 annotations, target equal to
    the normalized counts, gold argmax-or-corrupted per the threshold rule."""
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, f"planted:{uid_prefix}")))
    examples: list[AnnotatedExample] = []
    i = 0
    for cluster in clusters:
        counts = _quantize_counts(cluster.dist)
        target = normalize(counts)
        for _ in range(n_per_cluster):
            premise, hypothesis = _example_texts(cluster, rng)
            gold = _corrupted_gold(target, rng, corrupt_threshold_bits)
            examples.append(
                AnnotatedExample(
                    uid=f"{uid_prefix}-{i:05d}",
                    premise=premise,
                    hypothesis=hypothesis,
                    source=Source.CHAOS,
                    annotator_counts=counts,
                    gold=gold,
                    target=target,
                )
            )
            i += 1
    return Corpus(name, tuple(examples))


def regression_items(corpus: Corpus) -> list[TaskItem]:
    """Downstream regression task over a planted corpus: predict the true
    entailment mass of each example's distribution."""
    return [
        TaskItem(ex.uid, ex.premise, ex.hypothesis, ex.target.p_e)
        for ex in corpus.examples
        if ex.target is not None
    ]
