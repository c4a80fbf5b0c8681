"""Desk-scale differentiable text classifier.

Hashed bag-of-words features (premise / hypothesis / token-overlap buckets),
one ELU hidden layer, softmax head over the three NLI labels. Trained with
soft-target cross-entropy; one-hot targets are just a special case of the
same code path. Everything is seeded and bit-reproducible.
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass, field

import numpy as np

from .convert import TargetMode
from .dist import LABEL_ORDER, GoldLabel, LabelDistribution
from .ingest import Corpus
from .util import DataError, derive_seed


class EmptyText(DataError):
    """A premise or hypothesis produced no tokens."""


class DimensionMismatch(DataError):
    """Feature vector and model dimensions disagree."""


class EmptyCorpus(DataError):
    """Training or prediction requested on a corpus without examples."""


class TargetModeMismatch(DataError):
    """Corpus targets are inconsistent with the configured target mode."""


class ModelFormatError(DataError):
    """A serialized model file does not match the documented layout."""


_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and keep maximal alphanumeric runs (punctuation splits)."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class FeatureConfig:
    """Hashed n-gram feature space: three buckets of hash_dim slots each
    (premise, hypothesis, shared-token overlap)."""

    hash_dim: int = 2**15
    ngram_orders: frozenset[int] = frozenset({1, 2})
    hash_seed: int = 0

    def __post_init__(self) -> None:
        if self.hash_dim < 2**10 or self.hash_dim & (self.hash_dim - 1):
            raise DataError(f"hash_dim must be a power of two >= 1024, got {self.hash_dim}")
        if not self.ngram_orders or not self.ngram_orders <= {1, 2}:
            raise DataError(f"ngram_orders must be a non-empty subset of {{1,2}}")

    @property
    def dim(self) -> int:
        return 3 * self.hash_dim


@dataclass(frozen=True)
class SparseVector:
    indices: np.ndarray  # unique, sorted, int64
    values: np.ndarray  # float64, same length
    dim: int


def _stable_hash(token: str, seed: int) -> int:
    digest = hashlib.blake2b(
        token.encode("utf-8"), digest_size=8, key=seed.to_bytes(8, "little")
    ).digest()
    return int.from_bytes(digest, "little")


def _ngrams(tokens: list[str], orders: frozenset[int]) -> list[str]:
    grams: list[str] = []
    if 1 in orders:
        grams.extend(tokens)
    if 2 in orders:
        grams.extend(f"{a} {b}" for a, b in zip(tokens, tokens[1:]))
    return grams


def featurize(premise: str, hypothesis: str, cfg: FeatureConfig) -> SparseVector:
    """Deterministic sparse features: n-gram counts per text bucket plus one
    indicator per token type shared by both texts."""
    p_tokens = tokenize(premise)
    h_tokens = tokenize(hypothesis)
    if not p_tokens:
        raise EmptyText(f"premise {premise!r} has no tokens")
    if not h_tokens:
        raise EmptyText(f"hypothesis {hypothesis!r} has no tokens")
    accum: dict[int, float] = {}
    for bucket, grams in enumerate(
        (
            _ngrams(p_tokens, cfg.ngram_orders),
            _ngrams(h_tokens, cfg.ngram_orders),
            sorted(set(p_tokens) & set(h_tokens)),
        )
    ):
        offset = bucket * cfg.hash_dim
        for gram in grams:
            idx = offset + _stable_hash(gram, cfg.hash_seed) % cfg.hash_dim
            accum[idx] = accum.get(idx, 0.0) + 1.0
    indices = np.array(sorted(accum), dtype=np.int64)
    values = np.array([accum[i] for i in indices], dtype=np.float64)
    return SparseVector(indices, values, cfg.dim)


def softmax3(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax (max subtraction) over a logit vector."""
    shifted = logits - np.max(logits)
    exps = np.exp(shifted)
    return exps / np.sum(exps)


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, x, np.expm1(x))


def elu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, 1.0, np.exp(x))


@dataclass
class ClassifierModel:
    """Feature config plus the two dense parameter blocks."""

    feature_config: FeatureConfig
    w1: np.ndarray  # (dim, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, 3)
    b2: np.ndarray  # (3,)
    rng_seed: int

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    def copy(self) -> "ClassifierModel":
        return ClassifierModel(
            self.feature_config,
            self.w1.copy(),
            self.b1.copy(),
            self.w2.copy(),
            self.b2.copy(),
            self.rng_seed,
        )


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape: tuple) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def init_model(cfg: FeatureConfig, hidden: int, seed: int) -> ClassifierModel:
    """Seeded uniform(-a, a) init with a = sqrt(6 / (fan_in + fan_out))."""
    rng = np.random.Generator(np.random.PCG64(seed))
    w1 = _glorot(rng, cfg.dim, hidden, (cfg.dim, hidden))
    b1 = np.zeros(hidden)
    w2 = _glorot(rng, hidden, 3, (hidden, 3))
    b2 = np.zeros(3)
    return ClassifierModel(cfg, w1, b1, w2, b2, seed)


def _forward_parts(
    model: ClassifierModel, features: SparseVector
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Returns (pre-activation, hidden, logits, probabilities)."""
    if features.dim != model.feature_config.dim:
        raise DimensionMismatch(
            f"feature dim {features.dim} != model dim {model.feature_config.dim}"
        )
    pre = model.w1[features.indices].T @ features.values + model.b1
    h = elu(pre)
    logits = model.w2.T @ h + model.b2
    return pre, h, logits, softmax3(logits)


def forward(model: ClassifierModel, features: SparseVector) -> LabelDistribution:
    """Predicted distribution; softmax guarantees a valid simplex point."""
    _, _, _, q = _forward_parts(model, features)
    return LabelDistribution(float(q[0]), float(q[1]), float(q[2]))


@dataclass
class Gradients:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


def loss_and_grad(
    model: ClassifierModel,
    batch: list[tuple[SparseVector, LabelDistribution]],
) -> tuple[float, Gradients]:
    """Mean soft cross-entropy over the batch and its exact gradient.

    The logit gradient per example is (q - t) / batch_size; it backpropagates
    through the ELU and both linear maps.
    """
    if not batch:
        raise EmptyCorpus("empty batch")
    n = len(batch)
    grads = Gradients(
        np.zeros_like(model.w1),
        np.zeros_like(model.b1),
        np.zeros_like(model.w2),
        np.zeros_like(model.b2),
    )
    loss = 0.0
    for features, target in batch:
        pre, h, logits, q = _forward_parts(model, features)
        t = np.array(target.as_tuple())
        # stable log-softmax for the loss value
        shifted = logits - np.max(logits)
        log_q = shifted - np.log(np.sum(np.exp(shifted)))
        loss += float(-np.dot(t, log_q)) / n
        d_logits = (q - t) / n
        grads.w2 += np.outer(h, d_logits)
        grads.b2 += d_logits
        d_h = model.w2 @ d_logits
        d_pre = d_h * elu_grad(pre)
        grads.b1 += d_pre
        # feature indices are unique by construction, so += is safe
        grads.w1[features.indices] += np.outer(features.values, d_pre)
    return loss, grads


SGD = "sgd"
SGD_MOMENTUM = "sgd_momentum"
ADAM = "adam"
_OPTIMIZERS = (SGD, SGD_MOMENTUM, ADAM)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    learning_rate: float = 1e-3
    epochs: int = 10
    optimizer: str = ADAM
    seed: int = 0
    target_mode: TargetMode = TargetMode.AMBIGUITY
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    pretrain_corpus: str | None = None  # path, consumed by the CLI
    finetune_corpus: str | None = None

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise DataError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise DataError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in _OPTIMIZERS:
            raise DataError(f"unknown optimizer {self.optimizer!r}")


class _OptimizerState:
    def __init__(self, cfg: TrainConfig, model: ClassifierModel) -> None:
        self.cfg = cfg
        self.step_count = 0
        blocks = ("w1", "b1", "w2", "b2")
        if cfg.optimizer == SGD_MOMENTUM:
            self.velocity = {k: np.zeros_like(getattr(model, k)) for k in blocks}
        elif cfg.optimizer == ADAM:
            self.m = {k: np.zeros_like(getattr(model, k)) for k in blocks}
            self.v = {k: np.zeros_like(getattr(model, k)) for k in blocks}

    def step(self, model: ClassifierModel, grads: Gradients) -> None:
        cfg = self.cfg
        self.step_count += 1
        for name in ("w1", "b1", "w2", "b2"):
            p = getattr(model, name)
            g = getattr(grads, name)
            if cfg.optimizer == SGD:
                p -= cfg.learning_rate * g
            elif cfg.optimizer == SGD_MOMENTUM:
                v = self.velocity[name]
                v *= cfg.momentum
                v += g
                p -= cfg.learning_rate * v
            else:
                m = self.m[name]
                v = self.v[name]
                m *= cfg.adam_beta1
                m += (1.0 - cfg.adam_beta1) * g
                v *= cfg.adam_beta2
                v += (1.0 - cfg.adam_beta2) * g * g
                m_hat = m / (1.0 - cfg.adam_beta1**self.step_count)
                v_hat = v / (1.0 - cfg.adam_beta2**self.step_count)
                p -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    split: str
    loss: float
    accuracy: float


@dataclass
class TrainResult:
    model: ClassifierModel
    history: list[EpochStats] = field(default_factory=list)


def _target_argmax_index(target: LabelDistribution) -> int:
    return LABEL_ORDER.index(target.argmax())


def featurize_corpus(
    corpus: Corpus, cfg: FeatureConfig
) -> list[tuple[SparseVector, LabelDistribution | None]]:
    return [
        (featurize(ex.premise, ex.hypothesis, cfg), ex.target) for ex in corpus.examples
    ]


def train(
    cfg: TrainConfig,
    corpus: Corpus,
    feature_config: FeatureConfig = FeatureConfig(),
    hidden: int = 128,
    initial_model: ClassifierModel | None = None,
) -> TrainResult:
    """Seeded minibatch training against each example's target distribution.

    Passing initial_model warm-starts from a previous phase (gold pretrain
    followed by ambiguity finetune is two calls). epochs=0 returns the
    initialized model untouched.
    """
    if len(corpus) == 0:
        raise EmptyCorpus("cannot train on an empty corpus")
    for ex in corpus.examples:
        if ex.target is None:
            raise TargetModeMismatch(f"example {ex.uid!r} carries no target")
        if cfg.target_mode is TargetMode.GOLD_ONEHOT and not ex.target.is_one_hot():
            raise TargetModeMismatch(
                f"example {ex.uid!r} target {ex.target.as_tuple()} is not one-hot"
            )
    if initial_model is not None:
        model = initial_model.copy()
        feature_config = model.feature_config
    else:
        model = init_model(feature_config, hidden, derive_seed(cfg.seed, "init"))
    data = [
        (sv, t) for sv, t in featurize_corpus(corpus, feature_config) if t is not None
    ]
    result = TrainResult(model)
    if cfg.epochs == 0:
        return result
    optimizer = _OptimizerState(cfg, model)
    shuffle_rng = np.random.Generator(np.random.PCG64(derive_seed(cfg.seed, "shuffle")))
    n = len(data)
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            batch = [data[i] for i in order[start : start + cfg.batch_size]]
            loss, grads = loss_and_grad(model, batch)
            total_loss += loss * len(batch)
            optimizer.step(model, grads)
        # accuracy against the target's argmax, measured after the epoch
        for sv, t in data:
            _, _, _, q = _forward_parts(model, sv)
            if int(np.argmax(q)) == _target_argmax_index(t):
                correct += 1
        result.history.append(
            EpochStats(epoch, "train", total_loss / n, correct / n)
        )
    return result


@dataclass(frozen=True)
class Prediction:
    uid: str
    dist: LabelDistribution
    label: GoldLabel


def predict(model: ClassifierModel, corpus: Corpus) -> list[Prediction]:
    """One record per example, order preserved; argmax ties break E > N > C."""
    out: list[Prediction] = []
    for ex in corpus.examples:
        features = featurize(ex.premise, ex.hypothesis, model.feature_config)
        dist = forward(model, features)
        out.append(Prediction(ex.uid, dist, dist.argmax()))
    return out


def history_to_csv(history: list[EpochStats]) -> str:
    lines = ["epoch,split,loss,accuracy"]
    for h in history:
        lines.append(f"{h.epoch},{h.split},{h.loss:.17g},{h.accuracy:.17g}")
    return "\n".join(lines) + "\n"


# --- serialization ---------------------------------------------------------
#
# Binary layout, all little-endian:
#   magic  b"ANLI" | version u32 | hash_dim u64 | ngram mask u8
#   (bit0 = unigrams, bit1 = bigrams) | hash_seed u64 | hidden u32
#   | rng_seed i64 | W1 | b1 | W2 | b2 as row-major float64 arrays.

_MAGIC = b"ANLI"
_VERSION = 1


def model_to_bytes(model: ClassifierModel) -> bytes:
    cfg = model.feature_config
    mask = (1 if 1 in cfg.ngram_orders else 0) | (2 if 2 in cfg.ngram_orders else 0)
    head = struct.pack(
        "<4sIQBQIq",
        _MAGIC,
        _VERSION,
        cfg.hash_dim,
        mask,
        cfg.hash_seed,
        model.hidden,
        model.rng_seed,
    )
    blocks = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes()
        for arr in (model.w1, model.b1, model.w2, model.b2)
    )
    return head + blocks


def model_from_bytes(data: bytes) -> ClassifierModel:
    head_size = struct.calcsize("<4sIQBQIq")
    if len(data) < head_size:
        raise ModelFormatError("truncated model file")
    magic, version, hash_dim, mask, hash_seed, hidden, rng_seed = struct.unpack(
        "<4sIQBQIq", data[:head_size]
    )
    if magic != _MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}")
    if version != _VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    orders = frozenset(o for o, bit in ((1, 1), (2, 2)) if mask & bit)
    cfg = FeatureConfig(hash_dim=int(hash_dim), ngram_orders=orders, hash_seed=int(hash_seed))
    dim = cfg.dim
    expected = head_size + 8 * (dim * hidden + hidden + hidden * 3 + 3)
    if len(data) != expected:
        raise ModelFormatError(f"model file has {len(data)} bytes, expected {expected}")
    offset = head_size

    def take(shape: tuple) -> np.ndarray:
        nonlocal offset
        size = int(np.prod(shape)) * 8
        arr = np.frombuffer(data[offset : offset + size], dtype="<f8").reshape(shape)
        offset += size
        return arr.astype(np.float64).copy()

    w1 = take((dim, hidden))
    b1 = take((hidden,))
    w2 = take((hidden, 3))
    b2 = take((3,))
    return ClassifierModel(cfg, w1, b1, w2, b2, int(rng_seed))


def save_model(model: ClassifierModel, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))


def load_model(path: str) -> ClassifierModel:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
