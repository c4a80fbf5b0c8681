"""Command-line entry point: config-driven, reproducible experiment runs.

Every command resolves one flat config (file plus --set overrides), derives
all of its randomness from the single `seed` key via purpose strings, writes
its artifacts plus a manifest (resolved config, input/output hashes, seed,
wall time), and uses exit codes 1 (usage), 2 (IO), 3 (data validation).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import convert as convert_mod
from . import evaluation, ingest, model as model_mod, transfer as transfer_mod
from .config import ConfigError, RunConfig
from .convert import ConversionConfig, TargetMode
from .dist import GoldLabel, LabelDistribution, majority_label
from .ingest import (
    ChaosFieldMap,
    Corpus,
    DedupKey,
    MultilabelFieldMap,
    ParseResult,
    Source,
    UnliFieldMap,
)
from .util import DataError, derive_seed, sha256_file

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_DATA = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


_KNOWN_KEY_PREFIXES = (
    "ingest.multilabel.",
    "ingest.chaos.",
    "ingest.unli.",
)
_KNOWN_KEYS = {
    "seed",
    "out_dir",
    "build.snli",
    "build.mnli",
    "build.unli",
    "build.chaos",
    "build.holdouts",
    "build.dedup_key",
    "build.out",
    "build.max_error_rate",
    "build.name",
    "convert.target_mode",
    "convert.filter_unli",
    "convert.unli_low_cut",
    "convert.unli_high_cut",
    "convert.include_sources",
    "model.hash_dim",
    "model.ngram_orders",
    "model.hash_seed",
    "model.hidden",
    "train.corpus",
    "train.pretrain_corpus",
    "train.pretrain_epochs",
    "train.batch_size",
    "train.learning_rate",
    "train.epochs",
    "train.optimizer",
    "train.target_mode",
    "train.out",
    "train.history_out",
    "eval.model",
    "eval.targets",
    "eval.format",
    "eval.bin_edges",
    "eval.max_error_rate",
    "eval.report_out",
    "bins.report",
    "bins.edges",
    "crossval.corpus",
    "crossval.k",
    "crossval.modes",
    "transfer.model_soft",
    "transfer.model_gold",
    "transfer.task",
    "transfer.data",
    "transfer.train",
    "transfer.dev",
    "transfer.test",
    "transfer.head_layers",
    "transfer.head_hidden",
    "transfer.trials",
    "transfer.max_epochs",
    "transfer.patience",
    "transfer.learning_rate",
    "transfer.batch_size",
}


def _validate_keys(cfg: RunConfig) -> None:
    for key in cfg.values:
        if key in _KNOWN_KEYS or key.startswith(_KNOWN_KEY_PREFIXES):
            continue
        raise ConfigError(f"unknown config key {key!r}")


def _load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    cfg.apply_overrides(args.set or [])
    _validate_keys(cfg)
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.get("out_dir", "ambinli_out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


class _Manifest:
    def __init__(self, command: str, cfg: RunConfig) -> None:
        self.command = command
        self.cfg = cfg
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}
        self.t0 = time.monotonic()

    def add_input(self, path: str | Path) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def add_output(self, path: str | Path) -> None:
        self.outputs[str(path)] = sha256_file(path)

    def write(self, out_dir: Path) -> Path:
        payload = {
            "command": self.command,
            "config": self.cfg.resolved(),
            "seed": self.cfg.get_int("seed", 0),
            "input_hashes": self.inputs,
            "output_hashes": self.outputs,
            "wall_time_s": round(time.monotonic() - self.t0, 3),
        }
        path = out_dir / f"{self.command}_manifest.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
        return path


def _field_maps(cfg: RunConfig) -> tuple[MultilabelFieldMap, ChaosFieldMap, UnliFieldMap]:
    m = MultilabelFieldMap(
        uid=cfg.get("ingest.multilabel.uid", "pairID"),
        premise=cfg.get("ingest.multilabel.premise", "sentence1"),
        hypothesis=cfg.get("ingest.multilabel.hypothesis", "sentence2"),
        labels=cfg.get("ingest.multilabel.labels", "annotator_labels"),
        gold=cfg.get("ingest.multilabel.gold", "gold_label"),
    )
    c = ChaosFieldMap(
        uid=cfg.get("ingest.chaos.uid", "uid"),
        counter=cfg.get("ingest.chaos.counter", "label_counter"),
        majority=cfg.get("ingest.chaos.majority", "majority_label"),
        example=cfg.get("ingest.chaos.example", "example"),
        premise=cfg.get("ingest.chaos.premise", "premise"),
        hypothesis=cfg.get("ingest.chaos.hypothesis", "hypothesis"),
    )
    u = UnliFieldMap(
        uid=cfg.get("ingest.unli.uid", "id"),
        premise=cfg.get("ingest.unli.premise", "premise"),
        hypothesis=cfg.get("ingest.unli.hypothesis", "hypothesis"),
        score=cfg.get("ingest.unli.score", "score"),
    )
    return m, c, u


def _conversion_config(cfg: RunConfig) -> ConversionConfig:
    sources = frozenset(
        Source(token)
        for token in cfg.get_list(
            "convert.include_sources", ["snli_original", "mnli_original", "unli"]
        )
    )
    return ConversionConfig(
        unli_low_cut=cfg.get_float("convert.unli_low_cut", 0.05),
        unli_high_cut=cfg.get_float("convert.unli_high_cut", 0.97),
        include_sources=sources,
        target_mode=TargetMode(cfg.get("convert.target_mode", "ambiguity")),
        filter_unli=cfg.get_bool("convert.filter_unli", False),
    )


def _feature_config(cfg: RunConfig) -> model_mod.FeatureConfig:
    return model_mod.FeatureConfig(
        hash_dim=cfg.get_int("model.hash_dim", 2**15),
        ngram_orders=frozenset(
            int(o) for o in cfg.get_list("model.ngram_orders", ["1", "2"])
        ),
        hash_seed=cfg.get_int("model.hash_seed", 0),
    )


def _train_config(cfg: RunConfig, seed: int, mode: TargetMode) -> model_mod.TrainConfig:
    return model_mod.TrainConfig(
        batch_size=cfg.get_int("train.batch_size", 128),
        learning_rate=cfg.get_float("train.learning_rate", 1e-3),
        epochs=cfg.get_int("train.epochs", 10),
        optimizer=cfg.get("train.optimizer", model_mod.ADAM),
        seed=seed,
        target_mode=mode,
    )


def _report_line_errors(
    tag: str, result: ParseResult, error_lines: list[str]
) -> None:
    for err in result.errors:
        error_lines.append(f"{tag}:{err.line}: [{err.kind}] {err.cause}")


# --- commands ----------------------------------------------------------------

def cmd_build(cfg: RunConfig) -> int:
    out_dir = _out_dir(cfg)
    manifest = _Manifest("build", cfg)
    ml_map, chaos_map, unli_map = _field_maps(cfg)
    max_rate = cfg.get_float("build.max_error_rate", 0.001)
    sources: list[Corpus] = []
    error_lines: list[str] = []

    def parse_file(path: str, kind: str, source: Source | None = None) -> Corpus:
        manifest.add_input(path)
        with open(path, "r", encoding="utf-8") as fh:
            if kind == "multilabel":
                assert source is not None
                result = ingest.parse_multilabel_jsonl(
                    fh, source, ml_map, path_label=path, max_error_rate=max_rate
                )
            elif kind == "chaos":
                result = ingest.parse_chaos_jsonl(
                    fh, chaos_map, path_label=path, max_error_rate=max_rate
                )
            else:
                result = ingest.parse_unli_csv(
                    fh, unli_map, path_label=path, max_error_rate=max_rate
                )
        _report_line_errors(path, result, error_lines)
        return result.corpus

    if cfg.get("build.snli"):
        sources.append(parse_file(cfg.require("build.snli"), "multilabel", Source.SNLI_ORIGINAL))
    if cfg.get("build.mnli"):
        sources.append(parse_file(cfg.require("build.mnli"), "multilabel", Source.MNLI_ORIGINAL))
    if cfg.get("build.unli"):
        sources.append(parse_file(cfg.require("build.unli"), "unli"))
    for path in cfg.get_list("build.chaos"):
        sources.append(parse_file(path, "chaos"))
    holdouts = [parse_file(path, "chaos") for path in cfg.get_list("build.holdouts")]
    if not sources:
        raise UsageError("build needs at least one of build.snli/mnli/unli/chaos")

    conv = _conversion_config(cfg)
    dedup_key = DedupKey(cfg.get("build.dedup_key", "uid"))
    result = convert_mod.build_ambinli(
        sources, holdouts, conv, name=cfg.get("build.name", "ambinli"), dedup_key=dedup_key
    )
    corpus_path = out_dir / cfg.get("build.out", "corpus.jsonl")
    ingest.write_corpus_jsonl(result.corpus, corpus_path)
    manifest.add_output(corpus_path)

    report = {
        "per_source_in": result.report.per_source_in,
        "dedup_removed": result.report.dedup_removed,
        "filter_removed": result.report.filter_removed,
        "no_majority_dropped": result.report.no_majority_dropped,
        "total_out": result.report.total_out,
        "line_errors": len(error_lines),
    }
    report_path = out_dir / "build_report.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")
    manifest.add_output(report_path)
    if error_lines:
        errors_path = out_dir / "build_errors.txt"
        errors_path.write_text("\n".join(error_lines) + "\n", encoding="utf-8")
        manifest.add_output(errors_path)
    manifest.write(out_dir)
    print(f"build: wrote {result.report.total_out} examples to {corpus_path}")
    for key, value in sorted(report.items()):
        if key != "total_out":
            print(f"build: {key} = {value}")
    if error_lines:
        print(f"build: {len(error_lines)} malformed input lines, see build_errors.txt",
              file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def _load_canonical(path: str, manifest: _Manifest) -> Corpus:
    manifest.add_input(path)
    return ingest.read_corpus_jsonl(path)


def cmd_train(cfg: RunConfig) -> int:
    out_dir = _out_dir(cfg)
    manifest = _Manifest("train", cfg)
    corpus = _load_canonical(cfg.require("train.corpus"), manifest)
    feature_cfg = _feature_config(cfg)
    hidden = cfg.get_int("model.hidden", 128)
    seed = derive_seed(cfg.get_int("seed", 0), "train")
    mode = TargetMode(cfg.get("train.target_mode", "ambiguity"))
    train_cfg = _train_config(cfg, seed, mode)

    history: list[model_mod.EpochStats] = []
    initial = None
    pretrain_path = cfg.get("train.pretrain_corpus")
    if pretrain_path:
        pretrain = _load_canonical(pretrain_path, manifest)
        pre_cfg = replace(
            train_cfg,
            epochs=cfg.get_int("train.pretrain_epochs", 3),
            target_mode=TargetMode.GOLD_ONEHOT,
            seed=derive_seed(cfg.get_int("seed", 0), "pretrain"),
        )
        pre_result = model_mod.train(pre_cfg, pretrain, feature_config=feature_cfg, hidden=hidden)
        history.extend(replace(h, split="pretrain") for h in pre_result.history)
        initial = pre_result.model
    result = model_mod.train(
        train_cfg, corpus, feature_config=feature_cfg, hidden=hidden, initial_model=initial
    )
    history.extend(replace(h, split="finetune") for h in result.history)

    model_path = out_dir / cfg.get("train.out", "model.bin")
    model_mod.save_model(result.model, str(model_path))
    manifest.add_output(model_path)
    history_path = out_dir / cfg.get("train.history_out", "loss_history.csv")
    history_path.write_text(model_mod.history_to_csv(history), encoding="utf-8")
    manifest.add_output(history_path)
    manifest.write(out_dir)
    final = history[-1] if history else None
    print(f"train: wrote {model_path}" + (
        f" (final loss {final.loss:.4f}, accuracy {final.accuracy:.4f})" if final else ""
    ))
    return EXIT_OK


def _load_eval_targets(cfg: RunConfig, manifest: _Manifest) -> Corpus:
    path = cfg.require("eval.targets")
    manifest.add_input(path)
    fmt = cfg.get("eval.format", "canonical")
    if fmt == "canonical":
        return ingest.read_corpus_jsonl(path)
    if fmt == "chaos":
        _, chaos_map, _ = _field_maps(cfg)
        with open(path, "r", encoding="utf-8") as fh:
            result = ingest.parse_chaos_jsonl(
                fh,
                chaos_map,
                path_label=path,
                max_error_rate=cfg.get_float("eval.max_error_rate", 0.001),
            )
        if result.errors:
            detail = "; ".join(
                f"line {e.line}: {e.cause}" for e in result.errors[:5]
            )
            raise DataError(f"{len(result.errors)} malformed target lines ({detail})")
        return result.corpus
    raise ConfigError(f"eval.format must be canonical or chaos, got {fmt!r}")


def cmd_eval(cfg: RunConfig) -> int:
    out_dir = _out_dir(cfg)
    manifest = _Manifest("eval", cfg)
    model_path = cfg.require("eval.model")
    manifest.add_input(model_path)
    classifier = model_mod.load_model(model_path)
    targets = _load_eval_targets(cfg, manifest)
    predictions = model_mod.predict(classifier, targets)
    edges = cfg.get_floats("eval.bin_edges", list(evaluation.DEFAULT_BIN_EDGES))
    report = evaluation.evaluate(predictions, targets, bin_edges=edges)

    base = cfg.get("eval.report_out", "eval_report")
    json_path = out_dir / f"{base}.json"
    json_path.write_text(evaluation.report_to_json(report), encoding="utf-8")
    text_path = out_dir / f"{base}.txt"
    text_path.write_text(evaluation.report_to_text(report), encoding="utf-8")
    # per-label counts of correctly predicted examples, for external plotting
    correct_counts = {
        label: sum(
            1 for r in report.per_example if r.correct and r.gold is label
        )
        for label in (GoldLabel.ENTAILMENT, GoldLabel.NEUTRAL, GoldLabel.CONTRADICTION)
    }
    csv_path = out_dir / f"{base}_correct_labels.csv"
    csv_path.write_text(evaluation.label_counts_csv(correct_counts), encoding="utf-8")
    for path in (json_path, text_path, csv_path):
        manifest.add_output(path)
    manifest.write(out_dir)
    print(evaluation.report_to_text(report), end="")
    return EXIT_OK


def _records_from_report_json(payload: dict) -> list[evaluation.ExampleRecord]:
    if "per_example" not in payload:
        raise DataError("report JSON lacks per_example records; re-run eval")
    records = []
    for row in payload["per_example"]:
        records.append(
            evaluation.ExampleRecord(
                uid=row["uid"],
                target=LabelDistribution(*row["target"]),
                predicted=LabelDistribution(*row["predicted"]),
                correct=row["correct"],
                entropy=row["entropy"],
                gold=GoldLabel(row["gold"]),
            )
        )
    return records


def cmd_bins(cfg: RunConfig) -> int:
    out_dir = _out_dir(cfg)
    manifest = _Manifest("bins", cfg)
    report_path = cfg.require("bins.report")
    manifest.add_input(report_path)
    payload = json.loads(Path(report_path).read_text(encoding="utf-8"))
    records = _records_from_report_json(payload)
    edges = cfg.get_floats("bins.edges", list(evaluation.DEFAULT_BIN_EDGES))
    binned = evaluation.entropy_bins(records, edges)
    out = {
        "edges": list(binned.edges),
        "bins": [evaluation.bin_to_json(b) for b in binned.bins],
        "below_range": evaluation.bin_to_json(binned.below_range),
        "above_range": evaluation.bin_to_json(binned.above_range),
    }
    bins_path = out_dir / "bins.json"
    bins_path.write_text(json.dumps(out, indent=2, sort_keys=True), encoding="utf-8")
    manifest.add_output(bins_path)
    manifest.write(out_dir)
    for b in binned.bins:
        jsd_s = f"{b.mean_jsd:.4f}" if b.mean_jsd is not None else "-"
        acc_s = f"{b.accuracy:.4f}" if b.accuracy is not None else "-"
        print(f"bins: [{b.lo:.2f} - {b.hi:.2f}] count {b.count} jsd {jsd_s} acc {acc_s}")
    print(f"bins: below {binned.below_range.count} above {binned.above_range.count}")
    return EXIT_OK


def _prepare_crossval_corpus(corpus: Corpus) -> Corpus:
    """Fill missing targets/golds from counts so crossval sees both."""
    fixed = []
    for ex in corpus.examples:
        if ex.target is None and ex.annotator_counts is not None:
            ex = convert_mod.counts_to_distribution(ex)
        if ex.gold is None and ex.annotator_counts is not None:
            ex = replace(ex, gold=majority_label(ex.annotator_counts))
        fixed.append(ex)
    return Corpus(corpus.name, tuple(fixed))


def cmd_crossval(cfg: RunConfig) -> int:
    out_dir = _out_dir(cfg)
    manifest = _Manifest("crossval", cfg)
    corpus = _prepare_crossval_corpus(_load_canonical(cfg.require("crossval.corpus"), manifest))
    seed = derive_seed(cfg.get_int("seed", 0), "crossval")
    modes = tuple(
        TargetMode(tok) for tok in cfg.get_list("crossval.modes", ["ambiguity", "gold_onehot"])
    )
    train_cfg = _train_config(cfg, seed, TargetMode.AMBIGUITY)
    report = evaluation.crossval(
        corpus,
        train_cfg,
        k=cfg.get_int("crossval.k", 3),
        modes=modes,
        feature_config=_feature_config(cfg),
        hidden=cfg.get_int("model.hidden", 128),
    )
    payload = {
        "k": report.k,
        "fold_split_seed": report.fold_split_seed,
        "outcomes": [
            {
                "fold": o.fold,
                "mode": o.mode.value,
                "accuracy": o.accuracy,
                "mean_jsd": o.mean_jsd,
                "n_eval": o.n_eval,
                "train_seed": o.train_seed,
            }
            for o in report.outcomes
        ],
        "mean_accuracy": {m.value: report.mean_accuracy(m) for m in modes},
    }
    report_path = out_dir / "crossval_report.json"
    report_path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    manifest.add_output(report_path)
    manifest.write(out_dir)
    for mode in modes:
        folds = " ".join(f"{a:.4f}" for a in report.fold_accuracies(mode))
        print(f"crossval: {mode.value} folds [{folds}] mean {report.mean_accuracy(mode):.4f}")
    return EXIT_OK


def cmd_transfer(cfg: RunConfig) -> int:
    out_dir = _out_dir(cfg)
    manifest = _Manifest("transfer", cfg)
    encoders = {}
    for name, key in (("soft", "transfer.model_soft"), ("gold", "transfer.model_gold")):
        path = cfg.get(key)
        if path:
            manifest.add_input(path)
            encoders[name] = model_mod.load_model(path)
    if not encoders:
        raise UsageError("transfer needs transfer.model_soft and/or transfer.model_gold")
    task = transfer_mod.TaskKind(cfg.get("transfer.task", "regression01"))

    def load_items(path: str) -> tuple[transfer_mod.TaskItem, ...]:
        manifest.add_input(path)
        with open(path, "r", encoding="utf-8") as fh:
            return tuple(transfer_mod.load_task_csv(fh, task))

    if cfg.get("transfer.data"):
        data = transfer_mod.TaskData(kind=task, pool=load_items(cfg.require("transfer.data")))
    else:
        data = transfer_mod.TaskData(
            kind=task,
            train=load_items(cfg.require("transfer.train")),
            dev=load_items(cfg.require("transfer.dev")),
            test=load_items(cfg.require("transfer.test")),
        )
    tcfg = transfer_mod.TransferConfig(
        task=task,
        head_hidden=cfg.get_int("transfer.head_hidden", 128),
        early_stop_patience=cfg.get_int("transfer.patience", 2),
        max_epochs=cfg.get_int("transfer.max_epochs", 100),
        batch_size=cfg.get_int("transfer.batch_size", 32),
        learning_rate=cfg.get_float("transfer.learning_rate", 1e-3),
        trials=cfg.get_int("transfer.trials", 5),
        base_seed=derive_seed(cfg.get_int("seed", 0), "transfer"),
    )
    depths = [int(d) for d in cfg.get_list("transfer.head_layers", ["1", "2"])]
    rows = transfer_mod.run_trials(data, encoders, tcfg, depths=depths)

    csv_path = out_dir / "transfer_table.csv"
    csv_path.write_text(transfer_mod.rows_to_csv(rows), encoding="utf-8")
    text_path = out_dir / "transfer_table.txt"
    text_path.write_text(transfer_mod.rows_to_text(rows), encoding="utf-8")
    json_path = out_dir / "transfer_table.json"
    json_path.write_text(
        json.dumps(
            [
                {
                    "encoder": r.encoder,
                    "head_layers": r.head_layers,
                    "mean": r.mean,
                    "std": r.std,
                    "trials": r.trials,
                    "single_trial": r.single_trial,
                }
                for r in rows
            ],
            indent=2,
            sort_keys=True,
        ),
        encoding="utf-8",
    )
    for path in (csv_path, text_path, json_path):
        manifest.add_output(path)
    manifest.write(out_dir)
    print(transfer_mod.rows_to_text(rows), end="")
    return EXIT_OK


_COMMANDS = {
    "build": cmd_build,
    "train": cmd_train,
    "eval": cmd_eval,
    "bins": cmd_bins,
    "crossval": cmd_crossval,
    "transfer": cmd_transfer,
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="ambinli", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name, help=f"run the {name} step")
        cmd.add_argument("--config", help="path to the key-value config file")
        cmd.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            help="override one config entry (repeatable)",
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        cfg = _load_config(args)
        return _COMMANDS[args.command](cfg)
    except UsageError as e:
        print(f"ambinli: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(f"ambinli: config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"ambinli: file not found: {e.filename or e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"ambinli: io error: {e}", file=sys.stderr)
        return EXIT_IO
    except DataError as e:
        print(f"ambinli: data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
