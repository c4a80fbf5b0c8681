"""Frozen-encoder transfer probe.

The trained classifier's hidden activations are the fixed representation;
fresh 1- or 2-layer ELU heads are trained on a downstream [0,1] regression
or binary-classification task with dev-loss early stopping, aggregated over
several seeds.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .model import ClassifierModel, elu, elu_grad, featurize, model_to_bytes, _forward_parts
from .ingest import Corpus
from .util import DataError, derive_seed, sha256_bytes


class EmptyData(DataError):
    """No examples available for a split that needs at least one."""


class LabelTypeMismatch(DataError):
    """Labels do not fit the configured task type."""


class DegenerateVariance(DataError):
    """Pearson correlation is undefined: fewer than two points or zero variance."""


class TaskKind(Enum):
    REGRESSION01 = "regression01"
    BINARY_CLASSIFICATION = "binary_classification"


@dataclass(frozen=True)
class TransferConfig:
    head_layers: int = 1
    head_hidden: int = 128
    task: TaskKind = TaskKind.REGRESSION01
    train_frac: float = 0.8
    dev_frac: float = 0.1
    test_frac: float = 0.1
    early_stop_patience: int = 2
    min_improvement: float = 1e-6
    max_epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    trials: int = 5
    base_seed: int = 0

    def __post_init__(self) -> None:
        if self.head_layers not in (1, 2):
            raise DataError(f"head_layers must be 1 or 2, got {self.head_layers}")
        if abs(self.train_frac + self.dev_frac + self.test_frac - 1.0) > 1e-9:
            raise DataError("split fractions must sum to 1")
        if self.trials < 1:
            raise DataError(f"trials must be >= 1, got {self.trials}")


def encoder_hash(model: ClassifierModel) -> str:
    """Content hash of the full encoder; the freeze contract asserts it is
    unchanged by any transfer run."""
    return sha256_bytes(model_to_bytes(model))


def encode(model: ClassifierModel, corpus: Corpus) -> np.ndarray:
    """Frozen representation: post-ELU hidden activations, one row per example."""
    reps = np.empty((len(corpus), model.hidden))
    for i, ex in enumerate(corpus.examples):
        features = featurize(ex.premise, ex.hypothesis, model.feature_config)
        _, h, _, _ = _forward_parts(model, features)
        reps[i] = h
    return reps


# --- heads -------------------------------------------------------------------

@dataclass
class Head:
    """1- or 2-layer readout. For REGRESSION01 the output is a sigmoid scalar;
    for BINARY_CLASSIFICATION a 2-way softmax."""

    task: TaskKind
    layers: list[tuple[np.ndarray, np.ndarray]]  # (W, b) per layer

    def copy(self) -> "Head":
        return Head(self.task, [(w.copy(), b.copy()) for w, b in self.layers])


def _init_head(task: TaskKind, in_dim: int, cfg: TransferConfig, seed: int) -> Head:
    rng = np.random.Generator(np.random.PCG64(seed))
    out_dim = 1 if task is TaskKind.REGRESSION01 else 2
    dims: list[tuple[int, int]]
    if cfg.head_layers == 1:
        dims = [(in_dim, out_dim)]
    else:
        dims = [(in_dim, cfg.head_hidden), (cfg.head_hidden, out_dim)]
    layers = []
    for fan_in, fan_out in dims:
        a = math.sqrt(6.0 / (fan_in + fan_out))
        layers.append((rng.uniform(-a, a, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return Head(task, layers)


def _head_forward(head: Head, x: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """x is (n, in_dim); returns per-layer pre-activations and the raw output
    (sigmoid probabilities for regression, class probabilities for binary)."""
    pres: list[np.ndarray] = []
    act = x
    for i, (w, b) in enumerate(head.layers):
        pre = act @ w + b
        pres.append(pre)
        if i < len(head.layers) - 1:
            act = elu(pre)
    out = pres[-1]
    if head.task is TaskKind.REGRESSION01:
        return pres, 1.0 / (1.0 + np.exp(-out[:, 0]))
    shifted = out - out.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    return pres, exps / exps.sum(axis=1, keepdims=True)


def head_predict(head: Head, x: np.ndarray) -> np.ndarray:
    return _head_forward(head, x)[1]


def head_loss(head: Head, x: np.ndarray, y: np.ndarray) -> float:
    """MSE for regression; mean natural-log cross-entropy for classification."""
    _, out = _head_forward(head, x)
    if head.task is TaskKind.REGRESSION01:
        return float(np.mean((out - y) ** 2))
    probs = out[np.arange(len(y)), y.astype(int)]
    return float(-np.mean(np.log(np.clip(probs, 1e-300, None))))


def _head_step(
    head: Head, x: np.ndarray, y: np.ndarray, lr: float, adam_state: dict, step: int
) -> None:
    """One Adam step on a minibatch."""
    n = len(x)
    pres, out = _head_forward(head, x)
    if head.task is TaskKind.REGRESSION01:
        # d MSE / d pre = 2 (p - y) p (1 - p) / n through the sigmoid
        p = out
        d_pre = (2.0 * (p - y) * p * (1.0 - p) / n)[:, None]
    else:
        d_pre = out.copy()
        d_pre[np.arange(n), y.astype(int)] -= 1.0
        d_pre /= n
    # backprop through layers in reverse
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(head.layers)  # type: ignore
    acts = [x]
    for i, pre in enumerate(pres[:-1]):
        acts.append(elu(pre))
    d = d_pre
    for i in reversed(range(len(head.layers))):
        w, _ = head.layers[i]
        grads[i] = (acts[i].T @ d, d.sum(axis=0))
        if i > 0:
            d = (d @ w.T) * elu_grad(pres[i - 1])
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    for i, ((w, b), (gw, gb)) in enumerate(zip(head.layers, grads)):
        for param, grad, key in ((w, gw, f"w{i}"), (b, gb, f"b{i}")):
            m = adam_state.setdefault(f"m_{key}", np.zeros_like(param))
            v = adam_state.setdefault(f"v_{key}", np.zeros_like(param))
            m *= beta1
            m += (1 - beta1) * grad
            v *= beta2
            v += (1 - beta2) * grad * grad
            m_hat = m / (1 - beta1**step)
            v_hat = v / (1 - beta2**step)
            param -= lr * m_hat / (np.sqrt(v_hat) + eps)


@dataclass
class HeadTrainResult:
    head: Head  # checkpoint with the best dev loss
    dev_losses: list[float]
    best_epoch: int  # 1-based
    epochs_run: int


def _check_labels(task: TaskKind, y: np.ndarray) -> None:
    if task is TaskKind.REGRESSION01:
        if y.size and (y.min() < 0.0 or y.max() > 1.0):
            raise LabelTypeMismatch("regression labels must lie in [0,1]")
    else:
        if not np.isin(y, (0, 1)).all():
            raise LabelTypeMismatch("classification labels must be 0 or 1")


def train_head(
    train_x: np.ndarray,
    train_y: np.ndarray,
    dev_x: np.ndarray,
    dev_y: np.ndarray,
    cfg: TransferConfig,
    seed: int = 0,
) -> HeadTrainResult:
    """Minibatch Adam with early stopping on dev loss.

    Stops once the dev loss has gone `early_stop_patience` consecutive epochs
    without a strict improvement (> min_improvement); returns the checkpoint
    from the best epoch.
    """
    if len(train_x) == 0 or len(dev_x) == 0:
        raise EmptyData("train and dev splits must be non-empty")
    _check_labels(cfg.task, train_y)
    _check_labels(cfg.task, dev_y)
    head = _init_head(cfg.task, train_x.shape[1], cfg, derive_seed(seed, "head-init"))
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "head-shuffle")))
    adam_state: dict = {}
    best = math.inf
    best_head = head.copy()
    best_epoch = 0
    dev_losses: list[float] = []
    stale = 0
    step = 0
    n = len(train_x)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            step += 1
            _head_step(head, train_x[idx], train_y[idx], cfg.learning_rate, adam_state, step)
        dev_loss = head_loss(head, dev_x, dev_y)
        dev_losses.append(dev_loss)
        if dev_loss < best - cfg.min_improvement:
            best = dev_loss
            best_head = head.copy()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break
    return HeadTrainResult(best_head, dev_losses, best_epoch, len(dev_losses))


# --- metrics -----------------------------------------------------------------

def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.size != y.size or x.size < 2:
        raise DegenerateVariance("pearson needs >= 2 paired points")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = math.sqrt(float(xc @ xc))
    sy = math.sqrt(float(yc @ yc))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateVariance("pearson undefined for zero variance")
    return float(xc @ yc) / (sx * sy)


def mse(preds: Sequence[float], ys: Sequence[float]) -> float:
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    return float(np.mean((p - y) ** 2))


# --- trial harness -----------------------------------------------------------

@dataclass(frozen=True)
class TaskItem:
    uid: str
    premise: str
    hypothesis: str
    label: float  # score in [0,1] or class 0/1


@dataclass(frozen=True)
class TaskData:
    """Downstream task data: either one pool split per trial by the config
    fractions, or fixed train/dev/test splits used for every trial."""

    kind: TaskKind
    pool: tuple[TaskItem, ...] = ()
    train: tuple[TaskItem, ...] = ()
    dev: tuple[TaskItem, ...] = ()
    test: tuple[TaskItem, ...] = ()

    @property
    def presplit(self) -> bool:
        return bool(self.train or self.dev or self.test)


def _items_corpus(items: Sequence[TaskItem], name: str) -> Corpus:
    from .ingest import AnnotatedExample, Source

    return Corpus(
        name,
        tuple(
            AnnotatedExample(
                uid=it.uid, premise=it.premise, hypothesis=it.hypothesis, source=Source.UNLI
            )
            for it in items
        ),
    )


def _split_pool(
    items: Sequence[TaskItem], cfg: TransferConfig, seed: int
) -> tuple[list[TaskItem], list[TaskItem], list[TaskItem]]:
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(items))
    n_train = int(round(cfg.train_frac * len(items)))
    n_dev = int(round(cfg.dev_frac * len(items)))
    shuffled = [items[int(i)] for i in order]
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_dev],
        shuffled[n_train + n_dev :],
    )


@dataclass(frozen=True)
class TrialMetrics:
    # regression: {"pearson", "mse"}; classification: {"accuracy", "ce_loss"}
    values: dict[str, float]


@dataclass(frozen=True)
class TransferRow:
    encoder: str
    head_layers: int
    mean: dict[str, float]
    std: dict[str, float]  # sample std (ddof=1); 0.0 by convention for 1 trial
    trials: int
    single_trial: bool


def _trial_metrics(
    head: Head, test_x: np.ndarray, test_y: np.ndarray, task: TaskKind
) -> TrialMetrics:
    preds = head_predict(head, test_x)
    if task is TaskKind.REGRESSION01:
        return TrialMetrics(
            {"pearson": pearson(preds, test_y), "mse": mse(preds, test_y)}
        )
    correct = float(np.mean(preds.argmax(axis=1) == test_y.astype(int)))
    return TrialMetrics(
        {"accuracy": correct, "ce_loss": head_loss(head, test_x, test_y)}
    )


def run_trials(
    data: TaskData,
    encoders: dict[str, ClassifierModel],
    cfg: TransferConfig,
    depths: Sequence[int] = (1, 2),
) -> list[TransferRow]:
    """Train heads for every encoder x head depth over `trials` seeds and
    aggregate each metric's mean and sample standard deviation.

    Encoder weights are frozen: the run asserts their content hash is
    untouched.
    """
    rows: list[TransferRow] = []
    hashes = {name: encoder_hash(m) for name, m in encoders.items()}
    rep_cache: dict[tuple[str, int], np.ndarray] = {}

    def reps_for(name: str, items: tuple[TaskItem, ...], tag: int) -> np.ndarray:
        key = (name, tag)
        if key not in rep_cache:
            rep_cache[key] = encode(encoders[name], _items_corpus(items, f"{name}-{tag}"))
        return rep_cache[key]

    for encoder_name in encoders:
        for depth in depths:
            trial_cfg = dataclasses.replace(cfg, head_layers=depth)
            per_trial: list[TrialMetrics] = []
            for trial in range(cfg.trials):
                seed = cfg.base_seed + trial
                if data.presplit:
                    splits = (list(data.train), list(data.dev), list(data.test))
                    # fixed splits: representations are reusable across trials
                    xs = [
                        reps_for(encoder_name, tuple(s), i)
                        for i, s in enumerate(splits)
                    ]
                else:
                    splits = _split_pool(data.pool, trial_cfg, derive_seed(seed, "split"))
                    xs = [
                        encode(
                            encoders[encoder_name],
                            _items_corpus(s, f"{encoder_name}-t{trial}-{i}"),
                        )
                        for i, s in enumerate(splits)
                    ]
                ys = [np.array([it.label for it in s], dtype=np.float64) for s in splits]
                if any(len(s) == 0 for s in splits):
                    raise EmptyData("a task split came out empty; provide more data")
                result = train_head(xs[0], ys[0], xs[1], ys[1], trial_cfg, seed=seed)
                per_trial.append(_trial_metrics(result.head, xs[2], ys[2], cfg.task))
            keys = sorted(per_trial[0].values)
            mean = {
                k: float(np.mean([t.values[k] for t in per_trial])) for k in keys
            }
            std = {
                k: (
                    float(np.std([t.values[k] for t in per_trial], ddof=1))
                    if cfg.trials > 1
                    else 0.0
                )
                for k in keys
            }
            rows.append(
                TransferRow(
                    encoder=encoder_name,
                    head_layers=depth,
                    mean=mean,
                    std=std,
                    trials=cfg.trials,
                    single_trial=cfg.trials == 1,
                )
            )
    for name, model in encoders.items():
        if encoder_hash(model) != hashes[name]:
            raise AssertionError(f"encoder {name!r} was mutated during transfer")
    return rows


def rows_to_csv(rows: Sequence[TransferRow]) -> str:
    keys = sorted(rows[0].mean) if rows else []
    header = ["encoder", "head_layers", "trials"]
    for k in keys:
        header += [f"{k}_mean", f"{k}_std"]
    lines = [",".join(header)]
    for r in rows:
        cells = [r.encoder, str(r.head_layers), str(r.trials)]
        for k in keys:
            cells += [f"{r.mean[k]:.17g}", f"{r.std[k]:.17g}"]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def rows_to_text(rows: Sequence[TransferRow]) -> str:
    keys = sorted(rows[0].mean) if rows else []
    lines = []
    for depth in sorted({r.head_layers for r in rows}):
        lines.append(f"{depth}-layer head")
        for r in rows:
            if r.head_layers != depth:
                continue
            cells = "  ".join(
                f"{k} {r.mean[k]:.4f} (std {r.std[k]:.4f})" for k in keys
            )
            flag = "  [single trial]" if r.single_trial else ""
            lines.append(f"  {r.encoder:<12} {cells}{flag}")
    return "\n".join(lines) + "\n"


# --- task CSV loading ----------------------------------------------------------

def load_task_csv(
    lines: Iterable[str],
    kind: TaskKind,
) -> list[TaskItem]:
    """Read downstream task rows: header must name id, a text or premise/
    hypothesis pair, and score (regression) or label (classification)."""
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyData("task CSV has no header") from None
    cols = {name: i for i, name in enumerate(header)}
    pair = "premise" in cols and "hypothesis" in cols
    if not pair and "text" not in cols:
        raise DataError(f"task CSV needs premise/hypothesis or text columns, got {header}")
    label_col = "score" if kind is TaskKind.REGRESSION01 else "label"
    if "id" not in cols or label_col not in cols:
        raise DataError(f"task CSV needs id and {label_col} columns, got {header}")
    items: list[TaskItem] = []
    for row in reader:
        if not row:
            continue
        value = float(row[cols[label_col]])
        if kind is TaskKind.REGRESSION01 and not 0.0 <= value <= 1.0:
            raise LabelTypeMismatch(f"score {value!r} outside [0,1]")
        if kind is TaskKind.BINARY_CLASSIFICATION and value not in (0.0, 1.0):
            raise LabelTypeMismatch(f"label {value!r} is not 0/1")
        if pair:
            premise, hypothesis = row[cols["premise"]], row[cols["hypothesis"]]
        else:
            # single-text tasks use the text as both sides of the pair
            premise = hypothesis = row[cols["text"]]
        items.append(TaskItem(row[cols["id"]], premise, hypothesis, value))
    if not items:
        raise EmptyData("task CSV has no data rows")
    return items
