"""Parsers for the three source formats plus the canonical corpus JSONL.

Sources:
  * multi-annotator NLI JSONL (SNLI/MNLI "Original" splits, 5 labels per pair)
  * ChaosNLI-style JSONL (100 annotations per pair)
  * UNLI-style CSV (one regression score in [0,1] per pair)

Malformed lines are collected into an error report, never silently dropped;
parsed count + error count always equals the number of input lines.
"""

from __future__ import annotations

import csv
import json
import unicodedata
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from .dist import GoldLabel, LabelCounts, LabelDistribution, majority_label
from .util import DataError, fmt_float


class EmptyInput(DataError):
    """The input stream contained no usable lines."""


class MissingColumn(DataError):
    """A required CSV column is absent from the header."""


class ExcessiveMalformedLines(DataError):
    """The malformed-line rate exceeded the configured abort threshold."""


class CanonicalFormatError(DataError):
    """A canonical corpus JSONL file violates its own schema."""


class DuplicateUid(DataError):
    """Two examples in one corpus share a uid."""


class Source(Enum):
    SNLI_ORIGINAL = "snli_original"
    MNLI_ORIGINAL = "mnli_original"
    UNLI = "unli"
    CHAOS = "chaos"


# deterministic concatenation order for corpus assembly
SOURCE_ORDER = (Source.SNLI_ORIGINAL, Source.MNLI_ORIGINAL, Source.UNLI, Source.CHAOS)

_LABEL_TOKENS = {
    "entailment": GoldLabel.ENTAILMENT,
    "neutral": GoldLabel.NEUTRAL,
    "contradiction": GoldLabel.CONTRADICTION,
    "e": GoldLabel.ENTAILMENT,
    "n": GoldLabel.NEUTRAL,
    "c": GoldLabel.CONTRADICTION,
}


@dataclass(frozen=True)
class AnnotatedExample:
    """One premise-hypothesis pair with whatever label information its source carries."""

    uid: str
    premise: str
    hypothesis: str
    source: Source
    annotator_counts: LabelCounts | None = None
    regression_p: float | None = None
    gold: GoldLabel | None = None
    target: LabelDistribution | None = None

    def __post_init__(self) -> None:
        if not self.uid:
            raise DataError("example uid must be non-empty")
        if self.regression_p is not None and not 0.0 <= self.regression_p <= 1.0:
            raise DataError(f"regression_p {self.regression_p!r} outside [0,1]")


@dataclass(frozen=True)
class SourceProvenance:
    path: str | None
    count: int


@dataclass(frozen=True)
class Corpus:
    """Ordered, uid-unique collection of examples with per-source provenance."""

    name: str
    examples: tuple[AnnotatedExample, ...]
    provenance: dict[Source, SourceProvenance] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "examples", tuple(self.examples))
        seen: set[str] = set()
        for ex in self.examples:
            if ex.uid in seen:
                raise DuplicateUid(f"duplicate uid {ex.uid!r} in corpus {self.name!r}")
            seen.add(ex.uid)
        if not self.provenance:
            object.__setattr__(self, "provenance", _count_provenance(self.examples, None))
        else:
            counted = {s: p.count for s, p in _count_provenance(self.examples, None).items()}
            declared = {s: p.count for s, p in self.provenance.items()}
            if counted != declared:
                raise DataError(
                    f"provenance counts {declared} disagree with examples {counted}"
                )

    def __len__(self) -> int:
        return len(self.examples)

    def uids(self) -> set[str]:
        return {ex.uid for ex in self.examples}


def _count_provenance(
    examples: Iterable[AnnotatedExample], path: str | None
) -> dict[Source, SourceProvenance]:
    counts: dict[Source, int] = {}
    for ex in examples:
        counts[ex.source] = counts.get(ex.source, 0) + 1
    return {s: SourceProvenance(path, n) for s, n in counts.items()}


@dataclass(frozen=True)
class LineError:
    """One rejected input line: its number (1-based), a kind tag, and the cause."""

    line: int
    kind: str  # "malformed" | "count_mismatch" | "out_of_range"
    cause: str


@dataclass(frozen=True)
class ParseResult:
    corpus: Corpus
    errors: tuple[LineError, ...]
    n_lines: int

    @property
    def error_rate(self) -> float:
        return len(self.errors) / self.n_lines if self.n_lines else 0.0


# Field-name maps; dataset exports vary, so these are configurable rather than
# hard-coded into the parsers (the CLI reads overrides from its config file).

@dataclass(frozen=True)
class MultilabelFieldMap:
    uid: str = "pairID"
    premise: str = "sentence1"
    hypothesis: str = "sentence2"
    labels: str = "annotator_labels"
    gold: str = "gold_label"


@dataclass(frozen=True)
class ChaosFieldMap:
    uid: str = "uid"
    counter: str = "label_counter"
    majority: str = "majority_label"
    example: str = "example"
    premise: str = "premise"
    hypothesis: str = "hypothesis"


@dataclass(frozen=True)
class UnliFieldMap:
    uid: str = "id"
    premise: str = "premise"
    hypothesis: str = "hypothesis"
    score: str = "score"


def _finish(
    name: str,
    examples: list[AnnotatedExample],
    errors: list[LineError],
    n_lines: int,
    path_label: str | None,
    max_error_rate: float | None,
) -> ParseResult:
    if n_lines == 0:
        raise EmptyInput(f"no input lines for {name!r}")
    if max_error_rate is not None and n_lines and len(errors) / n_lines > max_error_rate:
        raise ExcessiveMalformedLines(
            f"{len(errors)}/{n_lines} lines failed in {name!r} "
            f"(threshold {max_error_rate:.2%}); first: {errors[0]}"
        )
    corpus = Corpus(name, tuple(examples), _count_provenance(examples, path_label))
    return ParseResult(corpus, tuple(errors), n_lines)


def _iter_nonblank(lines: Iterable[str]) -> Iterator[tuple[int, str]]:
    for i, raw in enumerate(lines, start=1):
        line = raw.strip()
        if line:
            yield i, line


def parse_multilabel_jsonl(
    lines: Iterable[str],
    source: Source,
    field_map: MultilabelFieldMap = MultilabelFieldMap(),
    name: str | None = None,
    path_label: str | None = None,
    max_error_rate: float | None = None,
) -> ParseResult:
    """Parse SNLI/MNLI-style JSONL with per-annotator label lists.

    Annotation counts are tallied per example; a gold field of "-" maps to
    NO_MAJORITY.
    """
    name = name or source.value
    examples: list[AnnotatedExample] = []
    errors: list[LineError] = []
    seen: set[str] = set()
    n_lines = 0
    for lineno, line in _iter_nonblank(lines):
        n_lines += 1
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            errors.append(LineError(lineno, "malformed", f"invalid JSON: {e}"))
            continue
        try:
            examples.append(_multilabel_example(obj, source, field_map, seen))
        except _LineProblem as e:
            errors.append(LineError(lineno, e.kind, str(e)))
    return _finish(name, examples, errors, n_lines, path_label, max_error_rate)


class _LineProblem(Exception):
    def __init__(self, cause: str, kind: str = "malformed") -> None:
        super().__init__(cause)
        self.kind = kind


def _require(obj: dict, key: str) -> object:
    if key not in obj:
        raise _LineProblem(f"missing field {key!r}")
    return obj[key]


def _require_str(obj: dict, key: str) -> str:
    value = _require(obj, key)
    if not isinstance(value, str):
        raise _LineProblem(f"field {key!r} must be a string, got {type(value).__name__}")
    return value


def _multilabel_example(
    obj: object, source: Source, fm: MultilabelFieldMap, seen: set[str]
) -> AnnotatedExample:
    if not isinstance(obj, dict):
        raise _LineProblem("line is not a JSON object")
    uid = _require_str(obj, fm.uid)
    if not uid:
        raise _LineProblem("empty uid")
    if uid in seen:
        raise _LineProblem(f"duplicate uid {uid!r}")
    premise = _require_str(obj, fm.premise)
    hypothesis = _require_str(obj, fm.hypothesis)
    labels = _require(obj, fm.labels)
    if not isinstance(labels, list) or not labels:
        raise _LineProblem(f"field {fm.labels!r} must be a non-empty list")
    tally = {GoldLabel.ENTAILMENT: 0, GoldLabel.NEUTRAL: 0, GoldLabel.CONTRADICTION: 0}
    for token in labels:
        if not isinstance(token, str) or token.lower() not in _LABEL_TOKENS:
            raise _LineProblem(f"unknown annotator label {token!r}")
        tally[_LABEL_TOKENS[token.lower()]] += 1
    counts = LabelCounts(
        tally[GoldLabel.ENTAILMENT],
        tally[GoldLabel.NEUTRAL],
        tally[GoldLabel.CONTRADICTION],
    )
    gold_token = _require_str(obj, fm.gold)
    if gold_token == "-":
        gold = GoldLabel.NO_MAJORITY
    elif gold_token.lower() in _LABEL_TOKENS:
        gold = _LABEL_TOKENS[gold_token.lower()]
    else:
        raise _LineProblem(f"unknown gold label {gold_token!r}")
    seen.add(uid)
    return AnnotatedExample(
        uid=uid,
        premise=premise,
        hypothesis=hypothesis,
        source=source,
        annotator_counts=counts,
        gold=gold,
    )


def parse_chaos_jsonl(
    lines: Iterable[str],
    field_map: ChaosFieldMap = ChaosFieldMap(),
    name: str = "chaos",
    path_label: str | None = None,
    max_error_rate: float | None = None,
    expected_total: int = 100,
) -> ParseResult:
    """Parse ChaosNLI-style JSONL with a 100-annotation label counter per pair.

    The stored majority label is cross-checked against the counter; the gold
    label kept on each example is the one recomputed from the counts (ties
    become NO_MAJORITY).
    """
    examples: list[AnnotatedExample] = []
    errors: list[LineError] = []
    seen: set[str] = set()
    n_lines = 0
    for lineno, line in _iter_nonblank(lines):
        n_lines += 1
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            errors.append(LineError(lineno, "malformed", f"invalid JSON: {e}"))
            continue
        try:
            examples.append(_chaos_example(obj, field_map, seen, expected_total))
        except _LineProblem as e:
            errors.append(LineError(lineno, e.kind, str(e)))
    return _finish(name, examples, errors, n_lines, path_label, max_error_rate)


def _chaos_example(
    obj: object, fm: ChaosFieldMap, seen: set[str], expected_total: int
) -> AnnotatedExample:
    if not isinstance(obj, dict):
        raise _LineProblem("line is not a JSON object")
    uid = _require_str(obj, fm.uid)
    if not uid:
        raise _LineProblem("empty uid")
    if uid in seen:
        raise _LineProblem(f"duplicate uid {uid!r}")
    counter = _require(obj, fm.counter)
    if not isinstance(counter, dict):
        raise _LineProblem(f"field {fm.counter!r} must be an object")
    tally = {"e": 0, "n": 0, "c": 0}
    for key, value in counter.items():
        if key not in tally:
            raise _LineProblem(f"unknown counter key {key!r}")
        if not isinstance(value, int) or value < 0:
            raise _LineProblem(f"counter value for {key!r} must be a non-negative int")
        tally[key] = value
    counts = LabelCounts(tally["e"], tally["n"], tally["c"])
    if counts.total != expected_total:
        raise _LineProblem(
            f"counts sum to {counts.total}, expected {expected_total}",
            kind="count_mismatch",
        )
    computed = majority_label(counts)
    stated_token = _require_str(obj, fm.majority).lower()
    if stated_token not in _LABEL_TOKENS:
        raise _LineProblem(f"unknown majority label {stated_token!r}")
    stated = _LABEL_TOKENS[stated_token]
    # a tied counter forces NO_MAJORITY on our side; the file had to pick one
    if computed is not GoldLabel.NO_MAJORITY and stated is not computed:
        raise _LineProblem(
            f"stated majority {stated.value} disagrees with counts {counts.as_tuple()}"
        )
    # premise/hypothesis may be nested under the example field or top-level
    holder = obj.get(fm.example, obj)
    if not isinstance(holder, dict):
        raise _LineProblem(f"field {fm.example!r} must be an object")
    premise = _require_str(holder, fm.premise)
    hypothesis = _require_str(holder, fm.hypothesis)
    seen.add(uid)
    return AnnotatedExample(
        uid=uid,
        premise=premise,
        hypothesis=hypothesis,
        source=Source.CHAOS,
        annotator_counts=counts,
        gold=computed,
    )


def parse_unli_csv(
    lines: Iterable[str],
    field_map: UnliFieldMap = UnliFieldMap(),
    name: str = "unli",
    path_label: str | None = None,
    max_error_rate: float | None = None,
) -> ParseResult:
    """Parse UNLI-style CSV with one regression score in [0,1] per pair.

    Line numbers in errors refer to 1-based data rows (the header is row 0).
    """
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyInput(f"no header row in {name!r}") from None
    columns = {col: i for i, col in enumerate(header)}
    for needed in (field_map.uid, field_map.premise, field_map.hypothesis, field_map.score):
        if needed not in columns:
            raise MissingColumn(f"column {needed!r} not in header {header}")
    examples: list[AnnotatedExample] = []
    errors: list[LineError] = []
    seen: set[str] = set()
    n_rows = 0
    for row_no, row in enumerate(reader, start=1):
        if not row:
            continue
        n_rows += 1
        try:
            examples.append(_unli_example(row, row_no, columns, field_map, seen))
        except _LineProblem as e:
            errors.append(LineError(row_no, e.kind, str(e)))
    return _finish(name, examples, errors, n_rows, path_label, max_error_rate)


def _unli_example(
    row: list[str],
    row_no: int,
    columns: dict[str, int],
    fm: UnliFieldMap,
    seen: set[str],
) -> AnnotatedExample:
    if len(row) < len(columns):
        raise _LineProblem(f"row has {len(row)} fields, header has {len(columns)}")
    uid = row[columns[fm.uid]]
    if not uid:
        raise _LineProblem("empty uid")
    if uid in seen:
        raise _LineProblem(f"duplicate uid {uid!r}")
    try:
        score = float(row[columns[fm.score]])
    except ValueError:
        raise _LineProblem(f"score {row[columns[fm.score]]!r} is not a number") from None
    if not 0.0 <= score <= 1.0:
        raise _LineProblem(f"score {score!r} outside [0,1]", kind="out_of_range")
    seen.add(uid)
    return AnnotatedExample(
        uid=uid,
        premise=row[columns[fm.premise]],
        hypothesis=row[columns[fm.hypothesis]],
        source=Source.UNLI,
        regression_p=score,
    )


# --- dedup ---------------------------------------------------------------

class DedupKey(Enum):
    UID = "uid"
    PREMISE_HYPOTHESIS_TEXT = "premise_hypothesis_text"


def _text_key(ex: AnnotatedExample) -> tuple[str, str]:
    return (
        unicodedata.normalize("NFC", ex.premise).strip(),
        unicodedata.normalize("NFC", ex.hypothesis).strip(),
    )


@dataclass(frozen=True)
class DedupResult:
    corpus: Corpus
    removed: int


def dedup_against(corpus: Corpus, holdout: Corpus, key: DedupKey = DedupKey.UID) -> DedupResult:
    """Remove every example whose key appears in the holdout, preserving order."""
    if key is DedupKey.UID:
        blocked = holdout.uids()
        survivors = [ex for ex in corpus.examples if ex.uid not in blocked]
    else:
        blocked_text = {_text_key(ex) for ex in holdout.examples}
        survivors = [ex for ex in corpus.examples if _text_key(ex) not in blocked_text]
    removed = len(corpus.examples) - len(survivors)
    deduped = Corpus(corpus.name, tuple(survivors), _count_provenance(survivors, None))
    return DedupResult(deduped, removed)


# --- canonical corpus JSONL ----------------------------------------------

def example_to_json_line(ex: AnnotatedExample) -> str:
    """Serialize one example; floats carry 17 significant digits."""
    parts = [
        f'"uid": {json.dumps(ex.uid, ensure_ascii=False)}',
        f'"premise": {json.dumps(ex.premise, ensure_ascii=False)}',
        f'"hypothesis": {json.dumps(ex.hypothesis, ensure_ascii=False)}',
        f'"source": {json.dumps(ex.source.value)}',
    ]
    if ex.annotator_counts is not None:
        c = ex.annotator_counts
        parts.append(f'"counts": [{c.n_e}, {c.n_n}, {c.n_c}]')
    if ex.regression_p is not None:
        parts.append(f'"p": {fmt_float(ex.regression_p)}')
    if ex.gold is not None:
        parts.append(f'"gold": {json.dumps(ex.gold.value)}')
    if ex.target is not None:
        t = ex.target
        parts.append(
            f'"dist": [{fmt_float(t.p_e)}, {fmt_float(t.p_n)}, {fmt_float(t.p_c)}]'
        )
    return "{" + ", ".join(parts) + "}"


def write_corpus_jsonl(corpus: Corpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in corpus.examples:
            fh.write(example_to_json_line(ex))
            fh.write("\n")


_SOURCES_BY_VALUE = {s.value: s for s in Source}
_GOLD_BY_VALUE = {g.value: g for g in GoldLabel}


def parse_canonical_jsonl(
    lines: Iterable[str], name: str, path_label: str | None = None
) -> Corpus:
    """Read the canonical corpus JSONL back into a Corpus (strict: any bad
    line raises CanonicalFormatError)."""
    examples: list[AnnotatedExample] = []
    for lineno, line in _iter_nonblank(lines):
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError("not a JSON object")
            counts = None
            if "counts" in obj:
                ce, cn, cc = obj["counts"]
                counts = LabelCounts(int(ce), int(cn), int(cc))
            target = None
            if "dist" in obj:
                target = LabelDistribution(*(float(x) for x in obj["dist"]))
            gold = _GOLD_BY_VALUE[obj["gold"]] if "gold" in obj else None
            examples.append(
                AnnotatedExample(
                    uid=obj["uid"],
                    premise=obj["premise"],
                    hypothesis=obj["hypothesis"],
                    source=_SOURCES_BY_VALUE[obj["source"]],
                    annotator_counts=counts,
                    regression_p=float(obj["p"]) if "p" in obj else None,
                    gold=gold,
                    target=target,
                )
            )
        except (ValueError, KeyError, TypeError) as e:
            raise CanonicalFormatError(f"line {lineno}: {e}") from e
    return Corpus(name, tuple(examples), _count_provenance(examples, path_label))


def read_corpus_jsonl(path: str | Path, name: str | None = None) -> Corpus:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        return parse_canonical_jsonl(fh, name or path.stem, str(path))


def with_target(ex: AnnotatedExample, target: LabelDistribution) -> AnnotatedExample:
    return replace(ex, target=target)
