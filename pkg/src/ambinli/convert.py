"""Turn parsed examples into training targets and assemble ambiguity corpora.

Two target modes exist side by side so controlled comparisons stay honest:
AMBIGUITY keeps the full annotator distribution, GOLD_ONEHOT replaces it with
the one-hot majority label over exactly the same pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .dist import (
    ONE_HOT,
    GoldLabel,
    LabelDistribution,
    normalize,
)
from .ingest import (
    AnnotatedExample,
    Corpus,
    DedupKey,
    SOURCE_ORDER,
    Source,
    dedup_against,
)
from .util import DataError


class MissingCounts(DataError):
    """Example carries no annotator counts to convert."""


class OutOfRange(DataError):
    """Regression value outside [0,1]."""


class NoMajorityGold(DataError):
    """One-hot conversion hit a NO_MAJORITY or absent gold label."""


class TargetMode(Enum):
    AMBIGUITY = "ambiguity"
    GOLD_ONEHOT = "gold_onehot"


@dataclass(frozen=True)
class ConversionConfig:
    unli_low_cut: float = 0.05
    unli_high_cut: float = 0.97
    include_sources: frozenset[Source] = frozenset(
        {Source.SNLI_ORIGINAL, Source.MNLI_ORIGINAL, Source.UNLI}
    )
    target_mode: TargetMode = TargetMode.AMBIGUITY
    filter_unli: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.unli_low_cut < self.unli_high_cut <= 1.0:
            raise DataError(
                f"need 0 <= low_cut < high_cut <= 1, got "
                f"({self.unli_low_cut}, {self.unli_high_cut})"
            )


def counts_to_distribution(ex: AnnotatedExample) -> AnnotatedExample:
    """Fill the target with the normalized annotator counts."""
    if ex.annotator_counts is None:
        raise MissingCounts(f"example {ex.uid!r} has no annotator counts")
    return replace(ex, target=normalize(ex.annotator_counts))


def unli_to_distribution(p: float) -> LabelDistribution:
    """Piecewise-linear map from a [0,1] entailment score to a 3-label distribution.

    p < 0.5  -> (0, 2p, 1-2p); p >= 0.5 -> (2p-1, 2-2p, 0). Continuous at 0.5.
    """
    if not 0.0 <= p <= 1.0:
        raise OutOfRange(f"regression value {p!r} outside [0,1]")
    if p < 0.5:
        return LabelDistribution(0.0, 2.0 * p, 1.0 - 2.0 * p)
    return LabelDistribution(2.0 * p - 1.0, 2.0 - 2.0 * p, 0.0)


@dataclass(frozen=True)
class FilterResult:
    corpus: Corpus
    removed: int


def filter_extreme_unli(corpus: Corpus, cfg: ConversionConfig) -> FilterResult:
    """Drop UNLI examples with p < low_cut or p > high_cut.

    Values exactly equal to a cutoff survive (the thresholds are strict
    inequalities). Non-UNLI examples pass through untouched.
    """
    survivors = [
        ex
        for ex in corpus.examples
        if ex.source is not Source.UNLI
        or ex.regression_p is None
        or cfg.unli_low_cut <= ex.regression_p <= cfg.unli_high_cut
    ]
    removed = len(corpus.examples) - len(survivors)
    return FilterResult(Corpus(corpus.name, tuple(survivors)), removed)


def derive_unli_gold(p: float) -> GoldLabel:
    """Gold label for a regression-only example: argmax of the converted
    distribution, ties resolved entailment > neutral > contradiction."""
    return unli_to_distribution(p).argmax()


def gold_to_onehot(ex: AnnotatedExample) -> AnnotatedExample:
    """Fill the target with the one-hot gold distribution.

    UNLI-source examples derive gold from their regression value; everything
    else must already carry a strict-majority gold label.
    """
    if ex.source is Source.UNLI and ex.regression_p is not None:
        gold = derive_unli_gold(ex.regression_p)
        return replace(ex, gold=gold, target=ONE_HOT[gold])
    if ex.gold is None:
        raise NoMajorityGold(f"example {ex.uid!r} carries no gold label")
    if ex.gold is GoldLabel.NO_MAJORITY:
        raise NoMajorityGold(f"example {ex.uid!r} has no majority gold label")
    return replace(ex, target=ONE_HOT[ex.gold])


def convert_example(ex: AnnotatedExample, mode: TargetMode) -> AnnotatedExample:
    """Attach the target for one example according to the mode and its source."""
    if mode is TargetMode.GOLD_ONEHOT:
        return gold_to_onehot(ex)
    if ex.annotator_counts is not None:
        return counts_to_distribution(ex)
    if ex.regression_p is not None:
        return replace(ex, target=unli_to_distribution(ex.regression_p))
    raise MissingCounts(f"example {ex.uid!r} has neither counts nor a regression value")


def retarget(corpus: Corpus, mode: TargetMode, name: str | None = None) -> Corpus:
    """Re-derive every example's target in the given mode; used to build the
    gold arm of a controlled comparison from the same underlying corpus."""
    return Corpus(
        name or corpus.name,
        tuple(convert_example(ex, mode) for ex in corpus.examples),
    )


@dataclass(frozen=True)
class BuildReport:
    per_source_in: dict[str, int]
    dedup_removed: int
    filter_removed: int
    no_majority_dropped: int
    total_out: int


@dataclass(frozen=True)
class BuildResult:
    corpus: Corpus
    report: BuildReport


def build_ambinli(
    sources: list[Corpus],
    holdouts: list[Corpus],
    cfg: ConversionConfig,
    name: str = "ambinli",
    dedup_key: DedupKey = DedupKey.UID,
) -> BuildResult:
    """Assemble an ambiguity corpus: dedup against the holdouts, convert per
    source type, optionally drop extreme UNLI scores, and concatenate in the
    fixed source order (original order within each source).

    In GOLD_ONEHOT mode, examples whose gold is NO_MAJORITY are dropped (and
    counted) instead of converted; their counts stay usable in AMBIGUITY mode.
    """
    pooled = [
        ex
        for corpus in sources
        for ex in corpus.examples
        if ex.source in cfg.include_sources
    ]
    per_source_in = {s.value: 0 for s in SOURCE_ORDER if any(e.source is s for e in pooled)}
    for ex in pooled:
        per_source_in[ex.source.value] += 1
    # stable sort: deterministic source order, original order within a source
    pooled.sort(key=lambda ex: SOURCE_ORDER.index(ex.source))
    working = Corpus(name, tuple(pooled))

    dedup_removed = 0
    for holdout in holdouts:
        result = dedup_against(working, holdout, dedup_key)
        working = result.corpus
        dedup_removed += result.removed

    filter_removed = 0
    if cfg.filter_unli:
        filtered = filter_extreme_unli(working, cfg)
        working = filtered.corpus
        filter_removed = filtered.removed

    converted: list[AnnotatedExample] = []
    no_majority_dropped = 0
    for ex in working.examples:
        if (
            cfg.target_mode is TargetMode.GOLD_ONEHOT
            and ex.source is not Source.UNLI
            and ex.gold is GoldLabel.NO_MAJORITY
        ):
            no_majority_dropped += 1
            continue
        converted.append(convert_example(ex, cfg.target_mode))

    report = BuildReport(
        per_source_in=per_source_in,
        dedup_removed=dedup_removed,
        filter_removed=filter_removed,
        no_majority_dropped=no_majority_dropped,
        total_out=len(converted),
    )
    return BuildResult(Corpus(name, tuple(converted)), report)
