"""Target conversion: count normalization, the piecewise regression map,
extremity filtering, and corpus assembly."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ambinli.convert import (
    ConversionConfig,
    MissingCounts,
    NoMajorityGold,
    OutOfRange,
    TargetMode,
    build_ambinli,
    counts_to_distribution,
    derive_unli_gold,
    filter_extreme_unli,
    gold_to_onehot,
    retarget,
    unli_to_distribution,
)
from ambinli.dist import GoldLabel, LabelCounts, LabelDistribution
from ambinli.ingest import AnnotatedExample, Corpus, Source


def ml_example(uid, counts, gold, source=Source.SNLI_ORIGINAL):
    return AnnotatedExample(
        uid=uid,
        premise=f"premise {uid}",
        hypothesis=f"hypothesis {uid}",
        source=source,
        annotator_counts=counts,
        gold=gold,
    )


def unli_example(uid, p):
    return AnnotatedExample(
        uid=uid, premise=f"p {uid}", hypothesis=f"h {uid}", source=Source.UNLI, regression_p=p
    )


class TestCountsToDistribution:
    def test_simple(self):
        ex = counts_to_distribution(ml_example("a", LabelCounts(4, 1, 0), GoldLabel.ENTAILMENT))
        assert ex.target.as_tuple() == (0.8, 0.2, 0.0)

    def test_no_majority_still_converts(self):
        ex = counts_to_distribution(ml_example("a", LabelCounts(2, 2, 1), GoldLabel.NO_MAJORITY))
        assert ex.target.as_tuple() == (0.4, 0.4, 0.2)

    def test_hundred_count(self):
        ex = counts_to_distribution(ml_example("a", LabelCounts(47, 40, 13), GoldLabel.ENTAILMENT))
        assert ex.target.as_tuple() == (0.47, 0.40, 0.13)

    def test_missing_counts(self):
        with pytest.raises(MissingCounts):
            counts_to_distribution(unli_example("u", 0.5))


class TestUnliToDistribution:
    def test_exact_endpoints_and_midpoints(self):
        assert unli_to_distribution(0.0).as_tuple() == (0.0, 0.0, 1.0)
        assert unli_to_distribution(0.25).as_tuple() == (0.0, 0.5, 0.5)
        assert unli_to_distribution(0.5).as_tuple() == (0.0, 1.0, 0.0)
        assert unli_to_distribution(0.75).as_tuple() == (0.5, 0.5, 0.0)
        assert unli_to_distribution(1.0).as_tuple() == (1.0, 0.0, 0.0)

    def test_continuous_at_branch_point(self):
        eps = 1e-13
        below = unli_to_distribution(0.5 - eps).as_tuple()
        above = unli_to_distribution(0.5).as_tuple()
        gap = max(abs(x - y) for x, y in zip(below, above))
        assert gap < 1e-12

    def test_out_of_range(self):
        with pytest.raises(OutOfRange):
            unli_to_distribution(1.0001)
        with pytest.raises(OutOfRange):
            unli_to_distribution(-0.0001)

    @given(st.floats(0.0, 1.0, allow_nan=False))
    def test_structural_zeros_and_simplex(self, p):
        d = unli_to_distribution(p)
        assert abs(sum(d.as_tuple()) - 1.0) <= 1e-9
        if p >= 0.5:
            assert d.p_c == 0.0
        else:
            assert d.p_e == 0.0

    @given(st.floats(0.0, 1.0, allow_nan=False))
    def test_argmax_breakpoints(self, p):
        label = derive_unli_gold(p)
        if p < 0.25:
            assert label is GoldLabel.CONTRADICTION
        elif p == 0.25:
            assert label is GoldLabel.NEUTRAL  # N/C tie, order E > N > C
        elif p < 0.75:
            assert label is GoldLabel.NEUTRAL
        elif p == 0.75:
            assert label is GoldLabel.ENTAILMENT  # E/N tie
        else:
            assert label is GoldLabel.ENTAILMENT


class TestFilterExtremeUnli:
    def _corpus(self, ps):
        return Corpus("u", tuple(unli_example(f"u{i}", p) for i, p in enumerate(ps)))

    def test_cuts(self):
        corpus = self._corpus([0.03, 0.05, 0.5, 0.97, 0.98])
        result = filter_extreme_unli(corpus, ConversionConfig())
        kept = [ex.regression_p for ex in result.corpus.examples]
        assert kept == [0.05, 0.5, 0.97]  # boundary values survive
        assert result.removed == 2

    def test_non_unli_pass_through(self):
        mixed = Corpus(
            "m",
            (
                ml_example("a", LabelCounts(5, 0, 0), GoldLabel.ENTAILMENT),
                unli_example("u", 0.01),
            ),
        )
        result = filter_extreme_unli(mixed, ConversionConfig())
        assert [ex.uid for ex in result.corpus.examples] == ["a"]

    def test_bad_cut_config(self):
        with pytest.raises(Exception):
            ConversionConfig(unli_low_cut=0.9, unli_high_cut=0.1)


class TestGoldToOnehot:
    def test_plain_gold(self):
        ex = gold_to_onehot(ml_example("a", LabelCounts(5, 0, 0), GoldLabel.ENTAILMENT))
        assert ex.target.as_tuple() == (1.0, 0.0, 0.0)

    def test_no_majority_rejected(self):
        with pytest.raises(NoMajorityGold):
            gold_to_onehot(ml_example("a", LabelCounts(2, 2, 1), GoldLabel.NO_MAJORITY))

    def test_missing_gold_rejected(self):
        bare = AnnotatedExample("x", "P.", "H.", Source.SNLI_ORIGINAL)
        with pytest.raises(NoMajorityGold):
            gold_to_onehot(bare)

    def test_unli_gold_from_regression(self):
        # argmax of (0.8, 0.2, 0) from the piecewise map at p = 0.9
        ex = gold_to_onehot(unli_example("u", 0.9))
        assert ex.gold is GoldLabel.ENTAILMENT
        assert ex.target.as_tuple() == (1.0, 0.0, 0.0)

    def test_unli_midpoint_is_neutral(self):
        ex = gold_to_onehot(unli_example("u", 0.5))
        assert ex.gold is GoldLabel.NEUTRAL


class TestBuildAmbinli:
    def test_empty_sources(self):
        result = build_ambinli([], [], ConversionConfig())
        assert len(result.corpus) == 0
        assert result.report.total_out == 0

    def test_pipeline_arithmetic(self):
        # 2 multilabel + 3 UNLI, one UNLI extreme filtered -> 4 out
        ml = Corpus(
            "ml",
            (
                ml_example("m1", LabelCounts(4, 1, 0), GoldLabel.ENTAILMENT),
                ml_example("m2", LabelCounts(0, 5, 0), GoldLabel.NEUTRAL),
            ),
        )
        unli = Corpus(
            "unli",
            (
                unli_example("u1", 0.4),
                unli_example("u2", 0.6),
                unli_example("u3", 0.99),
            ),
        )
        cfg = ConversionConfig(filter_unli=True)
        result = build_ambinli([ml, unli], [], cfg)
        assert result.report.total_out == 4
        assert result.report.filter_removed == 1
        assert all(ex.target is not None for ex in result.corpus.examples)

    def test_dedup_and_order(self):
        snli = Corpus("s", (ml_example("s1", LabelCounts(5, 0, 0), GoldLabel.ENTAILMENT),))
        mnli = Corpus(
            "m",
            (
                ml_example("m1", LabelCounts(5, 0, 0), GoldLabel.ENTAILMENT, Source.MNLI_ORIGINAL),
                ml_example("m2", LabelCounts(0, 0, 5), GoldLabel.CONTRADICTION, Source.MNLI_ORIGINAL),
            ),
        )
        unli = Corpus("u", (unli_example("u1", 0.8),))
        holdout = Corpus("h", (ml_example("m1", LabelCounts(5, 0, 0), GoldLabel.ENTAILMENT, Source.CHAOS),))
        # feed corpora out of order: assembly must still be SNLI, MNLI, UNLI
        result = build_ambinli([unli, mnli, snli], [holdout], ConversionConfig())
        assert [ex.uid for ex in result.corpus.examples] == ["s1", "m2", "u1"]
        assert result.report.dedup_removed == 1

    def test_gold_mode_drops_no_majority(self):
        ml = Corpus(
            "ml",
            (
                ml_example("m1", LabelCounts(2, 2, 1), GoldLabel.NO_MAJORITY),
                ml_example("m2", LabelCounts(5, 0, 0), GoldLabel.ENTAILMENT),
            ),
        )
        gold_cfg = ConversionConfig(target_mode=TargetMode.GOLD_ONEHOT)
        result = build_ambinli([ml], [], gold_cfg)
        assert result.report.no_majority_dropped == 1
        assert [ex.uid for ex in result.corpus.examples] == ["m2"]
        # ambiguity mode keeps the tied example
        soft = build_ambinli([ml], [], ConversionConfig())
        assert soft.report.total_out == 2

    def test_deterministic_output(self):
        ml = Corpus("ml", (ml_example("m1", LabelCounts(3, 1, 1), GoldLabel.ENTAILMENT),))
        unli = Corpus("u", (unli_example("u1", 0.37),))
        a = build_ambinli([ml, unli], [], ConversionConfig())
        b = build_ambinli([ml, unli], [], ConversionConfig())
        assert a.corpus.examples == b.corpus.examples

    def test_include_sources_filter(self):
        ml = Corpus("ml", (ml_example("m1", LabelCounts(5, 0, 0), GoldLabel.ENTAILMENT),))
        unli = Corpus("u", (unli_example("u1", 0.5),))
        cfg = ConversionConfig(include_sources=frozenset({Source.UNLI}))
        result = build_ambinli([ml, unli], [], cfg)
        assert [ex.uid for ex in result.corpus.examples] == ["u1"]


class TestRetarget:
    def test_modes_share_examples(self):
        ml = Corpus(
            "ml",
            (ml_example("m1", LabelCounts(3, 2, 0), GoldLabel.ENTAILMENT),),
        )
        soft = retarget(ml, TargetMode.AMBIGUITY)
        gold = retarget(ml, TargetMode.GOLD_ONEHOT)
        assert soft.examples[0].target.as_tuple() == (0.6, 0.4, 0.0)
        assert gold.examples[0].target.as_tuple() == (1.0, 0.0, 0.0)
        assert soft.examples[0].uid == gold.examples[0].uid
