"""ChaosNLI-style evaluation: divergence scores, accuracy, entropy binning,
three-fold cross-validation, and qualitative prediction-difference reports.

Accuracy compares the argmax prediction against the majority label recomputed
from annotation counts; examples without a strict majority are excluded from
accuracy (but counted, and still included in the divergence means).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .convert import TargetMode, gold_to_onehot
from .dist import (
    GoldLabel,
    LabelDistribution,
    entropy,
    jsd,
    kl,
    majority_label,
    normalize,
)
from .ingest import AnnotatedExample, Corpus
from .model import FeatureConfig, Prediction, TrainConfig, predict, train
from .util import DataError, derive_seed


class UidMismatch(DataError):
    """Prediction uids do not exactly cover the target uids."""


class BadEdges(DataError):
    """Entropy bin edges are not strictly increasing."""


class TooSmall(DataError):
    """Corpus has fewer examples than requested folds."""


DEFAULT_BIN_EDGES = (0.08, 0.58, 1.08, 1.58)


@dataclass(frozen=True)
class ExampleRecord:
    uid: str
    target: LabelDistribution
    predicted: LabelDistribution
    # None when the target has no strict majority (excluded from accuracy)
    correct: bool | None
    entropy: float
    gold: GoldLabel


@dataclass(frozen=True)
class BinMetrics:
    lo: float
    hi: float
    count: int
    mean_jsd: float | None
    accuracy: float | None
    n_scored: int
    n_correct: int


@dataclass(frozen=True)
class BinnedReport:
    edges: tuple[float, ...]
    bins: tuple[BinMetrics, ...]
    below_range: BinMetrics
    above_range: BinMetrics


@dataclass(frozen=True)
class EvalReport:
    dataset: str
    n_examples: int
    mean_jsd: float
    mean_kl: float
    accuracy: float
    n_scored: int
    n_correct: int
    n_no_majority: int
    entropy_bins: BinnedReport
    per_example: tuple[ExampleRecord, ...]


def _reference(ex: AnnotatedExample) -> tuple[LabelDistribution, GoldLabel]:
    """Human distribution and recomputed gold for one evaluation example."""
    if ex.annotator_counts is not None:
        return normalize(ex.annotator_counts), majority_label(ex.annotator_counts)
    if ex.target is not None:
        gold = ex.gold if ex.gold is not None else ex.target.argmax()
        return ex.target, gold
    raise DataError(f"evaluation example {ex.uid!r} carries no counts or target")


def evaluate(
    predictions: Sequence[Prediction],
    targets: Corpus,
    bin_edges: Sequence[float] = DEFAULT_BIN_EDGES,
    dataset: str | None = None,
) -> EvalReport:
    """Mean JSD / KL of predictions against the human distributions plus
    majority-label accuracy, with an entropy-bin breakdown."""
    by_uid = {p.uid: p for p in predictions}
    if len(by_uid) != len(predictions) or set(by_uid) != targets.uids():
        missing = targets.uids() - set(by_uid)
        extra = set(by_uid) - targets.uids()
        raise UidMismatch(
            f"prediction uids do not cover targets "
            f"(missing {sorted(missing)[:3]}..., extra {sorted(extra)[:3]}...)"
        )
    records: list[ExampleRecord] = []
    for ex in targets.examples:
        pred = by_uid[ex.uid]
        ref_dist, ref_gold = _reference(ex)
        correct: bool | None
        if ref_gold is GoldLabel.NO_MAJORITY:
            correct = None
        else:
            correct = pred.label is ref_gold
        records.append(
            ExampleRecord(
                uid=ex.uid,
                target=ref_dist,
                predicted=pred.dist,
                correct=correct,
                entropy=entropy(ref_dist),
                gold=ref_gold,
            )
        )
    n = len(records)
    mean_jsd = sum(jsd(r.predicted, r.target) for r in records) / n if n else 0.0
    mean_kl = sum(kl(r.target, r.predicted) for r in records) / n if n else 0.0
    scored = [r for r in records if r.correct is not None]
    n_correct = sum(1 for r in scored if r.correct)
    return EvalReport(
        dataset=dataset or targets.name,
        n_examples=n,
        mean_jsd=mean_jsd,
        mean_kl=mean_kl,
        accuracy=n_correct / len(scored) if scored else 0.0,
        n_scored=len(scored),
        n_correct=n_correct,
        n_no_majority=n - len(scored),
        entropy_bins=entropy_bins(records, bin_edges),
        per_example=tuple(records),
    )


def _bin_metrics(lo: float, hi: float, members: list[ExampleRecord]) -> BinMetrics:
    scored = [r for r in members if r.correct is not None]
    n_correct = sum(1 for r in scored if r.correct)
    return BinMetrics(
        lo=lo,
        hi=hi,
        count=len(members),
        mean_jsd=(
            sum(jsd(r.predicted, r.target) for r in members) / len(members)
            if members
            else None
        ),
        accuracy=n_correct / len(scored) if scored else None,
        n_scored=len(scored),
        n_correct=n_correct,
    )


def entropy_bins(
    records: Sequence[ExampleRecord], edges: Sequence[float] = DEFAULT_BIN_EDGES
) -> BinnedReport:
    """Stratify records by target entropy into half-open bins [lo, hi), the
    last bin closed above. Out-of-range records land in the below/above
    buckets, never dropped: bucket counts always sum to len(records)."""
    edges = tuple(float(e) for e in edges)
    if len(edges) < 2 or any(a >= b for a, b in zip(edges, edges[1:])):
        raise BadEdges(f"edges must be strictly increasing, got {edges}")
    n_bins = len(edges) - 1
    members: list[list[ExampleRecord]] = [[] for _ in range(n_bins)]
    below: list[ExampleRecord] = []
    above: list[ExampleRecord] = []
    for r in records:
        h = r.entropy
        if h < edges[0]:
            below.append(r)
        elif h > edges[-1]:
            above.append(r)
        else:
            # final bin is closed above
            idx = min(int(np.searchsorted(edges, h, side="right")) - 1, n_bins - 1)
            members[idx].append(r)
    return BinnedReport(
        edges=edges,
        bins=tuple(
            _bin_metrics(edges[i], edges[i + 1], members[i]) for i in range(n_bins)
        ),
        below_range=_bin_metrics(float("-inf"), edges[0], below),
        above_range=_bin_metrics(edges[-1], float("inf"), above),
    )


# --- cross-validation -------------------------------------------------------

@dataclass(frozen=True)
class FoldSplit:
    k: int
    assignments: dict[str, int]  # uid -> fold index
    seed: int

    def fold_uids(self, fold: int) -> set[str]:
        return {uid for uid, f in self.assignments.items() if f == fold}


def kfold_split(corpus: Corpus, k: int = 3, seed: int = 0) -> FoldSplit:
    """Seeded shuffle then round-robin assignment; fold sizes differ by <= 1."""
    n = len(corpus)
    if n < k:
        raise TooSmall(f"corpus of {n} examples cannot be split into {k} folds")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(n)
    assignments = {
        corpus.examples[int(idx)].uid: pos % k for pos, idx in enumerate(order)
    }
    return FoldSplit(k=k, assignments=assignments, seed=seed)


@dataclass(frozen=True)
class FoldOutcome:
    fold: int
    mode: TargetMode
    accuracy: float
    mean_jsd: float
    n_eval: int
    train_seed: int


@dataclass(frozen=True)
class CrossvalReport:
    k: int
    fold_split_seed: int
    outcomes: tuple[FoldOutcome, ...]

    def mean_accuracy(self, mode: TargetMode) -> float:
        accs = [o.accuracy for o in self.outcomes if o.mode is mode]
        return sum(accs) / len(accs)

    def fold_accuracies(self, mode: TargetMode) -> list[float]:
        return [o.accuracy for o in sorted(self.outcomes, key=lambda o: o.fold) if o.mode is mode]


def _with_mode_targets(
    examples: Sequence[AnnotatedExample], mode: TargetMode
) -> list[AnnotatedExample]:
    if mode is TargetMode.AMBIGUITY:
        return [ex for ex in examples]
    return [gold_to_onehot(ex) for ex in examples]


def crossval(
    corpus: Corpus,
    cfg: TrainConfig,
    k: int = 3,
    modes: Sequence[TargetMode] = (TargetMode.AMBIGUITY, TargetMode.GOLD_ONEHOT),
    feature_config: FeatureConfig = FeatureConfig(),
    hidden: int = 128,
) -> CrossvalReport:
    """Train on k-1 folds and score the held-out fold, once per target mode.

    Both modes share the fold assignment, the per-fold train seed (identical
    init and shuffle), and the example set: examples without a strict-majority
    gold label are dropped from training in every mode, so the target tensor
    is the only difference between arms. Held-out accuracy is measured against
    each example's gold label.
    """
    usable = [
        ex
        for ex in corpus.examples
        if ex.target is not None
        and ex.gold is not None
        and ex.gold is not GoldLabel.NO_MAJORITY
    ]
    if len(usable) < k:
        raise TooSmall(f"only {len(usable)} usable examples for {k} folds")
    base = Corpus(corpus.name, tuple(usable))
    split = kfold_split(base, k=k, seed=derive_seed(cfg.seed, "kfold"))
    outcomes: list[FoldOutcome] = []
    for fold in range(k):
        eval_uids = split.fold_uids(fold)
        train_examples = [ex for ex in base.examples if ex.uid not in eval_uids]
        eval_examples = [ex for ex in base.examples if ex.uid in eval_uids]
        eval_corpus = Corpus(f"{corpus.name}-fold{fold}", tuple(eval_examples))
        fold_seed = derive_seed(cfg.seed, f"fold{fold}")
        for mode in modes:
            arm = Corpus(
                f"{corpus.name}-train{fold}-{mode.value}",
                tuple(_with_mode_targets(train_examples, mode)),
            )
            arm_cfg = replace(cfg, seed=fold_seed, target_mode=mode)
            result = train(arm_cfg, arm, feature_config=feature_config, hidden=hidden)
            preds = predict(result.model, eval_corpus)
            correct = sum(
                1 for p, ex in zip(preds, eval_corpus.examples) if p.label is ex.gold
            )
            mean_jsd = sum(
                jsd(p.dist, ex.target)
                for p, ex in zip(preds, eval_corpus.examples)
                if ex.target is not None
            ) / len(eval_examples)
            outcomes.append(
                FoldOutcome(
                    fold=fold,
                    mode=mode,
                    accuracy=correct / len(eval_examples),
                    mean_jsd=mean_jsd,
                    n_eval=len(eval_examples),
                    train_seed=fold_seed,
                )
            )
    return CrossvalReport(k=k, fold_split_seed=split.seed, outcomes=tuple(outcomes))


# --- qualitative prediction-difference report -------------------------------

@dataclass(frozen=True)
class DiffRecord:
    uid: str
    premise: str
    hypothesis: str
    target: LabelDistribution
    gold: GoldLabel
    pred_a: LabelDistribution
    pred_b: LabelDistribution
    entropy: float


@dataclass(frozen=True)
class DiffReport:
    # label -> count of examples only that model got right
    only_a_correct: dict[GoldLabel, int]
    only_b_correct: dict[GoldLabel, int]
    # label counts over the whole target set (NO_MAJORITY tracked separately)
    all_labels: dict[GoldLabel, int]
    only_a_records: tuple[DiffRecord, ...]  # sorted by target entropy, descending
    only_b_records: tuple[DiffRecord, ...]


def prediction_diff_report(
    preds_a: Sequence[Prediction],
    preds_b: Sequence[Prediction],
    targets: Corpus,
) -> DiffReport:
    """Compare two prediction sets: per-label counts of exclusively-correct
    examples and the full records of those examples, most ambiguous first."""
    a_by_uid = {p.uid: p for p in preds_a}
    b_by_uid = {p.uid: p for p in preds_b}
    if set(a_by_uid) != targets.uids() or set(b_by_uid) != targets.uids():
        raise UidMismatch("prediction uid coverage differs from targets")
    zero = {GoldLabel.ENTAILMENT: 0, GoldLabel.NEUTRAL: 0, GoldLabel.CONTRADICTION: 0}
    only_a = dict(zero)
    only_b = dict(zero)
    all_labels = dict(zero)
    all_labels[GoldLabel.NO_MAJORITY] = 0
    rec_a: list[DiffRecord] = []
    rec_b: list[DiffRecord] = []
    for ex in targets.examples:
        ref_dist, ref_gold = _reference(ex)
        all_labels[ref_gold] += 1
        if ref_gold is GoldLabel.NO_MAJORITY:
            continue
        pa = a_by_uid[ex.uid]
        pb = b_by_uid[ex.uid]
        a_ok = pa.label is ref_gold
        b_ok = pb.label is ref_gold
        if a_ok == b_ok:
            continue
        record = DiffRecord(
            uid=ex.uid,
            premise=ex.premise,
            hypothesis=ex.hypothesis,
            target=ref_dist,
            gold=ref_gold,
            pred_a=pa.dist,
            pred_b=pb.dist,
            entropy=entropy(ref_dist),
        )
        if a_ok:
            only_a[ref_gold] += 1
            rec_a.append(record)
        else:
            only_b[ref_gold] += 1
            rec_b.append(record)
    def order(r: DiffRecord) -> tuple[float, str]:
        return (-r.entropy, r.uid)

    return DiffReport(
        only_a_correct=only_a,
        only_b_correct=only_b,
        all_labels=all_labels,
        only_a_records=tuple(sorted(rec_a, key=order)),
        only_b_records=tuple(sorted(rec_b, key=order)),
    )


# --- rendering ---------------------------------------------------------------

def bin_to_json(b: BinMetrics) -> dict:
    return {
        "lo": b.lo,
        "hi": b.hi,
        "count": b.count,
        "mean_jsd": b.mean_jsd,
        "accuracy": b.accuracy,
        "n_scored": b.n_scored,
        "n_correct": b.n_correct,
    }


def report_to_json(report: EvalReport, include_examples: bool = True) -> str:
    payload = {
        "dataset": report.dataset,
        "n_examples": report.n_examples,
        "mean_jsd": report.mean_jsd,
        "mean_kl": report.mean_kl,
        "accuracy": report.accuracy,
        "n_scored": report.n_scored,
        "n_correct": report.n_correct,
        "n_no_majority": report.n_no_majority,
        "entropy_bins": {
            "edges": list(report.entropy_bins.edges),
            "bins": [bin_to_json(b) for b in report.entropy_bins.bins],
            "below_range": bin_to_json(report.entropy_bins.below_range),
            "above_range": bin_to_json(report.entropy_bins.above_range),
        },
    }
    if include_examples:
        payload["per_example"] = [
            {
                "uid": r.uid,
                "target": list(r.target.as_tuple()),
                "predicted": list(r.predicted.as_tuple()),
                "correct": r.correct,
                "entropy": r.entropy,
                "gold": r.gold.value,
            }
            for r in report.per_example
        ]
    return json.dumps(payload, indent=2, sort_keys=True)


def report_to_text(report: EvalReport) -> str:
    lines = [
        f"dataset:        {report.dataset}",
        f"examples:       {report.n_examples}",
        f"mean JSD:       {report.mean_jsd:.4f}",
        f"mean KL:        {report.mean_kl:.4f}",
        f"accuracy:       {report.accuracy:.4f} "
        f"({report.n_correct}/{report.n_scored}, {report.n_no_majority} no-majority excluded)",
        "entropy bins (target entropy, half-open, last closed):",
    ]
    def fmt_bin(tag: str, b: BinMetrics) -> str:
        jsd_s = f"{b.mean_jsd:.4f}" if b.mean_jsd is not None else "-"
        acc_s = f"{b.accuracy:.4f}" if b.accuracy is not None else "-"
        return f"  {tag:<16} count {b.count:>6}  JSD {jsd_s:>7}  acc {acc_s:>7}"
    for b in report.entropy_bins.bins:
        lines.append(fmt_bin(f"[{b.lo:.2f} - {b.hi:.2f}]", b))
    lines.append(fmt_bin("below range", report.entropy_bins.below_range))
    lines.append(fmt_bin("above range", report.entropy_bins.above_range))
    return "\n".join(lines) + "\n"


def label_counts_csv(counts: dict[GoldLabel, int]) -> str:
    lines = ["label,count"]
    for label in (GoldLabel.ENTAILMENT, GoldLabel.NEUTRAL, GoldLabel.CONTRADICTION):
        if label in counts:
            lines.append(f"{label.value},{counts[label]}")
    if GoldLabel.NO_MAJORITY in counts:
        lines.append(f"{GoldLabel.NO_MAJORITY.value},{counts[GoldLabel.NO_MAJORITY]}")
    return "\n".join(lines) + "\n"
