"""Parsers, dedup, and the canonical corpus JSONL round-trip."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ambinli.dist import GoldLabel, LabelCounts, LabelDistribution
from ambinli.ingest import (
    AnnotatedExample,
    Corpus,
    DedupKey,
    DuplicateUid,
    EmptyInput,
    ExcessiveMalformedLines,
    MissingColumn,
    Source,
    dedup_against,
    example_to_json_line,
    parse_canonical_jsonl,
    parse_chaos_jsonl,
    parse_multilabel_jsonl,
    parse_unli_csv,
    read_corpus_jsonl,
    write_corpus_jsonl,
)


def ml_line(uid, labels, gold, premise="A dog runs.", hypothesis="An animal moves."):
    return json.dumps(
        {
            "pairID": uid,
            "sentence1": premise,
            "sentence2": hypothesis,
            "annotator_labels": labels,
            "gold_label": gold,
        }
    )


def chaos_line(uid, counter, majority, premise="A dog runs.", hypothesis="An animal moves."):
    return json.dumps(
        {
            "uid": uid,
            "label_counter": counter,
            "majority_label": majority,
            "example": {"uid": uid, "premise": premise, "hypothesis": hypothesis},
        }
    )


class TestMultilabelParse:
    def test_tally_and_gold(self):
        lines = [
            ml_line("a1", ["entailment"] * 4 + ["neutral"], "entailment"),
            ml_line("a2", ["entailment", "entailment", "neutral", "neutral", "contradiction"], "-"),
        ]
        result = parse_multilabel_jsonl(lines, Source.SNLI_ORIGINAL)
        assert not result.errors
        ex1, ex2 = result.corpus.examples
        assert ex1.annotator_counts == LabelCounts(4, 1, 0)
        assert ex1.gold is GoldLabel.ENTAILMENT
        # 2-2-1 tie: the "-" convention
        assert ex2.annotator_counts == LabelCounts(2, 2, 1)
        assert ex2.gold is GoldLabel.NO_MAJORITY

    def test_malformed_lines_collected_not_dropped(self):
        lines = [
            ml_line("a1", ["entailment"] * 5, "entailment"),
            "{not json",
            ml_line("a2", ["bogus_label"], "entailment"),
            ml_line("a3", ["neutral"] * 5, "neutral"),
        ]
        result = parse_multilabel_jsonl(lines, Source.SNLI_ORIGINAL)
        assert len(result.corpus.examples) == 2
        assert len(result.errors) == 2
        assert result.errors[0].line == 2
        # accounting: parsed + errored = lines
        assert len(result.corpus.examples) + len(result.errors) == result.n_lines

    def test_duplicate_uid_is_error(self):
        lines = [
            ml_line("dup", ["entailment"] * 5, "entailment"),
            ml_line("dup", ["neutral"] * 5, "neutral"),
        ]
        result = parse_multilabel_jsonl(lines, Source.SNLI_ORIGINAL)
        assert len(result.corpus.examples) == 1
        assert len(result.errors) == 1

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            parse_multilabel_jsonl([], Source.SNLI_ORIGINAL)

    def test_abort_threshold(self):
        lines = [ml_line("a1", ["entailment"] * 5, "entailment"), "{broken"]
        with pytest.raises(ExcessiveMalformedLines):
            parse_multilabel_jsonl(lines, Source.SNLI_ORIGINAL, max_error_rate=0.001)

    def test_provenance_counts(self):
        lines = [ml_line("a1", ["entailment"] * 5, "entailment")]
        result = parse_multilabel_jsonl(
            lines, Source.MNLI_ORIGINAL, path_label="some/file.jsonl"
        )
        prov = result.corpus.provenance[Source.MNLI_ORIGINAL]
        assert prov.path == "some/file.jsonl"
        assert prov.count == 1


class TestChaosParse:
    def test_counter_and_majority(self):
        result = parse_chaos_jsonl([chaos_line("c1", {"e": 100}, "e")])
        (ex,) = result.corpus.examples
        assert ex.annotator_counts == LabelCounts(100, 0, 0)
        assert ex.gold is GoldLabel.ENTAILMENT
        assert ex.source is Source.CHAOS

    def test_count_mismatch(self):
        result = parse_chaos_jsonl([chaos_line("c1", {"e": 60, "n": 30}, "e")])
        assert not result.corpus.examples
        assert result.errors[0].kind == "count_mismatch"

    def test_majority_cross_check(self):
        result = parse_chaos_jsonl([chaos_line("c1", {"e": 20, "n": 70, "c": 10}, "e")])
        assert result.errors and "disagrees" in result.errors[0].cause

    def test_tied_counter_keeps_no_majority(self):
        result = parse_chaos_jsonl([chaos_line("c1", {"e": 45, "n": 45, "c": 10}, "e")])
        (ex,) = result.corpus.examples
        assert ex.gold is GoldLabel.NO_MAJORITY

    def test_top_level_premise_hypothesis(self):
        line = json.dumps(
            {
                "uid": "c9",
                "label_counter": {"n": 100},
                "majority_label": "n",
                "premise": "P.",
                "hypothesis": "H.",
            }
        )
        result = parse_chaos_jsonl([line])
        assert result.corpus.examples[0].premise == "P."


class TestUnliParse:
    HEADER = "id,premise,hypothesis,score"

    def test_basic_row(self):
        result = parse_unli_csv([self.HEADER, "u1,A dog.,An animal.,0.5"])
        (ex,) = result.corpus.examples
        assert ex.regression_p == 0.5
        assert ex.source is Source.UNLI

    def test_out_of_range_score(self):
        result = parse_unli_csv([self.HEADER, "u1,A.,B.,1.2"])
        assert result.errors[0].kind == "out_of_range"
        assert not result.corpus.examples

    def test_non_numeric_score(self):
        result = parse_unli_csv([self.HEADER, "u1,A.,B.,high"])
        assert result.errors[0].kind == "malformed"

    def test_missing_column(self):
        with pytest.raises(MissingColumn):
            parse_unli_csv(["id,premise,hypothesis", "u1,A.,B."])

    def test_custom_field_map(self):
        from ambinli.ingest import UnliFieldMap

        fm = UnliFieldMap(uid="pair", premise="prem", hypothesis="hyp", score="unli")
        result = parse_unli_csv(["pair,prem,hyp,unli", "x,A.,B.,0.25"], field_map=fm)
        assert result.corpus.examples[0].regression_p == 0.25

    def test_quoted_commas(self):
        result = parse_unli_csv([self.HEADER, 'u1,"A dog, brown.",An animal.,0.75'])
        assert result.corpus.examples[0].premise == "A dog, brown."


def _corpus_of(*uids: str, source: Source = Source.SNLI_ORIGINAL) -> Corpus:
    return Corpus(
        "test",
        tuple(
            AnnotatedExample(
                uid=uid,
                premise=f"premise {uid}",
                hypothesis=f"hypothesis {uid}",
                source=source,
                annotator_counts=LabelCounts(5, 0, 0),
                gold=GoldLabel.ENTAILMENT,
            )
            for uid in uids
        ),
    )


class TestDedup:
    def test_uid_key(self):
        result = dedup_against(_corpus_of("a", "b", "c"), _corpus_of("b"))
        assert [ex.uid for ex in result.corpus.examples] == ["a", "c"]
        assert result.removed == 1

    def test_empty_holdout_is_identity(self):
        corpus = _corpus_of("a", "b")
        result = dedup_against(corpus, Corpus("empty", ()))
        assert result.corpus.examples == corpus.examples
        assert result.removed == 0

    def test_text_key_normalizes(self):
        base = Corpus(
            "base",
            (
                AnnotatedExample("x1", "  A dog runs. ", "An animal moves.", Source.SNLI_ORIGINAL),
                AnnotatedExample("x2", "Totally new.", "Other.", Source.SNLI_ORIGINAL),
            ),
        )
        holdout = Corpus(
            "hold",
            (AnnotatedExample("y1", "A dog runs.", "An animal moves.", Source.CHAOS),),
        )
        result = dedup_against(base, holdout, DedupKey.PREMISE_HYPOTHESIS_TEXT)
        assert [ex.uid for ex in result.corpus.examples] == ["x2"]

    def test_idempotent(self):
        corpus = _corpus_of("a", "b", "c", "d")
        holdout = _corpus_of("b", "d")
        once = dedup_against(corpus, holdout)
        twice = dedup_against(once.corpus, holdout)
        assert twice.corpus.examples == once.corpus.examples
        assert twice.removed == 0


class TestCorpusInvariants:
    def test_duplicate_uid_rejected(self):
        with pytest.raises(DuplicateUid):
            Corpus(
                "bad",
                (
                    AnnotatedExample("same", "P.", "H.", Source.UNLI, regression_p=0.5),
                    AnnotatedExample("same", "Q.", "I.", Source.UNLI, regression_p=0.6),
                ),
            )

    def test_regression_p_bounds(self):
        with pytest.raises(Exception):
            AnnotatedExample("u", "P.", "H.", Source.UNLI, regression_p=1.5)


example_strategy = st.builds(
    AnnotatedExample,
    uid=st.uuids().map(str),
    premise=st.text(min_size=1, max_size=30),
    hypothesis=st.text(min_size=1, max_size=30),
    source=st.sampled_from(list(Source)),
    annotator_counts=st.one_of(
        st.none(),
        st.builds(LabelCounts, st.integers(0, 100), st.integers(0, 100), st.integers(0, 100)),
    ),
    regression_p=st.one_of(st.none(), st.floats(0.0, 1.0, allow_nan=False)),
    gold=st.one_of(st.none(), st.sampled_from(list(GoldLabel))),
    target=st.one_of(
        st.none(),
        st.tuples(
            st.floats(0.001, 1.0), st.floats(0.001, 1.0), st.floats(0.001, 1.0)
        ).map(lambda t: LabelDistribution(t[0] / sum(t), t[1] / sum(t), t[2] / sum(t))),
    ),
)


class TestCanonicalRoundTrip:
    @given(st.lists(example_strategy, max_size=8, unique_by=lambda e: e.uid))
    @settings(max_examples=60, deadline=None)
    def test_round_trip_identity(self, examples):
        corpus = Corpus("rt", tuple(examples))
        lines = [example_to_json_line(ex) for ex in corpus.examples]
        parsed = parse_canonical_jsonl(lines, "rt")
        assert parsed.examples == corpus.examples

    def test_file_round_trip(self, tmp_path):
        corpus = Corpus(
            "demo",
            (
                AnnotatedExample(
                    "u1",
                    "Premise with unicode: café.",
                    "Hyp.",
                    Source.SNLI_ORIGINAL,
                    annotator_counts=LabelCounts(3, 1, 1),
                    gold=GoldLabel.ENTAILMENT,
                    target=LabelDistribution(0.6, 0.2, 0.2),
                ),
                AnnotatedExample(
                    "u2", "P.", "H.", Source.UNLI, regression_p=0.123456789012345678
                ),
            ),
        )
        path = tmp_path / "corpus.jsonl"
        write_corpus_jsonl(corpus, path)
        loaded = read_corpus_jsonl(path)
        assert loaded.examples == corpus.examples
        assert loaded.provenance[Source.UNLI].path == str(path)

    def test_seventeen_digit_floats(self, tmp_path):
        third = 1.0 / 3.0
        corpus = Corpus(
            "floats",
            (
                AnnotatedExample(
                    "u1",
                    "P.",
                    "H.",
                    Source.CHAOS,
                    target=LabelDistribution(third, third, 1.0 - 2 * third),
                ),
            ),
        )
        path = tmp_path / "f.jsonl"
        write_corpus_jsonl(corpus, path)
        text = path.read_text()
        assert "0.33333333333333331" in text
        assert read_corpus_jsonl(path).examples[0].target.p_e == third
