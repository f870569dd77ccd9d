"""Black-box predictor contract and the built-in baseline classifier.

The predictor contract is simply a callable: texts in, one probability
vector per text out, same order, never failing on odd-but-valid input.
Everything downstream (metrics, all four explainers, the harness) depends
only on that contract, so a served model can be attached through
:mod:`xdx.remote` without touching anything else.

The built-in baseline maps term-frequency x inverse-document-frequency
features through a single ReLU hidden layer (768 units by default) with
dropout 0.3, a 2-unit output layer and a softmax, trained with mini-batch
Adam on cross-entropy. The decision is the argmax of the two softmax
values, with exact ties resolved to Fake.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Corpus, Label, LevelSplit, TokenizerConfig, content_tokens
from .errors import (
    CorruptFileError,
    NonFiniteLossError,
    SingleClassTrainSetError,
    VersionMismatchError,
)

MODEL_MAGIC = b"XDXM"
MODEL_FORMAT_VERSION = 1

_CLASS_INDEX = {Label.REAL: 0, Label.FAKE: 1}


@dataclass(frozen=True)
class ProbVector:
    """Two-class probability vector; components sum to 1 within 1e-6."""

    p_real: float
    p_fake: float

    def __post_init__(self):
        for value in (self.p_real, self.p_fake):
            if not (-1e-9 <= value <= 1.0 + 1e-9):
                raise ValueError(f"probability out of range: {value}")
        if abs(self.p_real + self.p_fake - 1.0) > 1e-6:
            raise ValueError(f"probabilities sum to {self.p_real + self.p_fake}, not 1")

    @property
    def label(self) -> Label:
        # Exact tie goes to Fake: the conservative call for a detector.
        return Label.FAKE if self.p_fake >= self.p_real else Label.REAL

    def confidence(self) -> float:
        return max(self.p_real, self.p_fake)


@dataclass(frozen=True)
class BaselineConfig:
    hidden_units: int = 768
    dropout: float = 0.3
    learning_rate: float = 2e-5
    epochs: int = 10
    batch_size: int = 32
    vocab_size: int = 5000
    seed: int = 0
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)

    def __post_init__(self):
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.hidden_units < 1 or self.epochs < 1 or self.batch_size < 1 or self.vocab_size < 1:
            raise ValueError("hidden_units, epochs, batch_size and vocab_size must be positive")


@dataclass
class NetParams:
    w1: np.ndarray  # (vocab, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, 2)
    b2: np.ndarray  # (2,)

    def arrays(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def copy(self) -> "NetParams":
        return NetParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())


@dataclass(frozen=True)
class EpochStats:
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float


@dataclass
class TrainedModel:
    vocabulary: dict[str, int]
    idf: np.ndarray
    params: NetParams
    history: list[EpochStats]
    config: BaselineConfig

    def featurize(self, texts: Sequence[str]) -> np.ndarray:
        return _featurize(texts, self.vocabulary, self.idf, self.config.tokenizer)

    def predict_proba(self, texts: Sequence[str]) -> list[ProbVector]:
        probs = _softmax(_forward(self.featurize(texts), self.params))
        return [ProbVector(p_real=float(p[0]), p_fake=float(p[1])) for p in probs]

    def __call__(self, texts: Sequence[str]) -> list[ProbVector]:
        return self.predict_proba(texts)

    def classify(self, text: str) -> Label:
        return self.predict_proba([text])[0].label


def predict_proba(model: TrainedModel, texts: Sequence[str]) -> list[ProbVector]:
    return model.predict_proba(texts)


def classify(model: TrainedModel, text: str) -> Label:
    return model.classify(text)


# --- features ----------------------------------------------------------------


def build_vocabulary(
    texts: Sequence[str], vocab_size: int, tokenizer: TokenizerConfig
) -> tuple[dict[str, int], np.ndarray]:
    """Top-K tokens by document frequency with smoothed idf weights."""
    df: dict[str, int] = {}
    for text in texts:
        for token in set(content_tokens(text, tokenizer)):
            df[token] = df.get(token, 0) + 1
    ranked = sorted(df, key=lambda tok: (-df[tok], tok))[:vocab_size]
    vocabulary = {tok: i for i, tok in enumerate(ranked)}
    n_docs = len(texts)
    idf = np.array(
        [math.log((1 + n_docs) / (1 + df[tok])) + 1.0 for tok in ranked], dtype=np.float64
    )
    return vocabulary, idf


def _featurize(
    texts: Sequence[str], vocabulary: dict[str, int], idf: np.ndarray, tokenizer: TokenizerConfig
) -> np.ndarray:
    X = np.zeros((len(texts), len(vocabulary)), dtype=np.float64)
    for row, text in enumerate(texts):
        for token in content_tokens(text, tokenizer):
            col = vocabulary.get(token)
            if col is not None:
                X[row, col] += 1.0
    X *= idf[None, :]
    norms = np.linalg.norm(X, axis=1)
    nonzero = norms > 0
    X[nonzero] /= norms[nonzero, None]
    return X


# --- network ------------------------------------------------------------------


def _forward(X: np.ndarray, params: NetParams, drop_mask: np.ndarray | None = None, keep_prob: float = 1.0) -> np.ndarray:
    hidden = np.maximum(X @ params.w1 + params.b1, 0.0)
    if drop_mask is not None:
        hidden = hidden * drop_mask / keep_prob  # inverted dropout
    return hidden @ params.w2 + params.b2


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def loss_and_gradients(
    params: NetParams,
    X: np.ndarray,
    y: np.ndarray,
    drop_mask: np.ndarray | None = None,
    keep_prob: float = 1.0,
) -> tuple[float, NetParams]:
    """Mean cross-entropy and its analytic gradients for every parameter."""
    n = X.shape[0]
    pre1 = X @ params.w1 + params.b1
    hidden = np.maximum(pre1, 0.0)
    dropped = hidden if drop_mask is None else hidden * drop_mask / keep_prob
    logits = dropped @ params.w2 + params.b2

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-log_probs[np.arange(n), y].mean())

    dlogits = np.exp(log_probs)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    gw2 = dropped.T @ dlogits
    gb2 = dlogits.sum(axis=0)
    dhidden = dlogits @ params.w2.T
    if drop_mask is not None:
        dhidden = dhidden * drop_mask / keep_prob
    dpre1 = dhidden * (pre1 > 0)
    gw1 = X.T @ dpre1
    gb1 = dpre1.sum(axis=0)
    return loss, NetParams(w1=gw1, b1=gb1, w2=gw2, b2=gb2)


class _Adam:
    def __init__(self, params: NetParams, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays().items()}

    def step(self, params: NetParams, grads: NetParams) -> None:
        self.t += 1
        arrays = params.arrays()
        for key, grad in grads.arrays().items():
            self.m[key] = self.beta1 * self.m[key] + (1 - self.beta1) * grad
            self.v[key] = self.beta2 * self.v[key] + (1 - self.beta2) * grad**2
            m_hat = self.m[key] / (1 - self.beta1**self.t)
            v_hat = self.v[key] / (1 - self.beta2**self.t)
            arrays[key] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _init_params(vocab_dim: int, hidden: int, rng: np.random.Generator) -> NetParams:
    return NetParams(
        w1=rng.normal(0.0, math.sqrt(2.0 / max(vocab_dim, 1)), size=(vocab_dim, hidden)),
        b1=np.zeros(hidden),
        w2=rng.normal(0.0, math.sqrt(1.0 / hidden), size=(hidden, 2)),
        b2=np.zeros(2),
    )


def _labels_array(corpus: Corpus) -> np.ndarray:
    return np.array([_CLASS_INDEX[s.label] for s in corpus], dtype=np.int64)


def fit_baseline(split: LevelSplit, config: BaselineConfig = BaselineConfig()) -> TrainedModel:
    """Train the baseline on the split's train partition.

    Deterministic for a fixed (data, config, seed): initialization, batch
    order and dropout masks all come from one seeded generator.
    """
    train_texts = [s.text for s in split.train]
    if not train_texts:
        raise SingleClassTrainSetError("train partition is empty")
    y_train = _labels_array(split.train)
    if len(np.unique(y_train)) < 2:
        raise SingleClassTrainSetError("train partition contains a single class")

    rng = np.random.default_rng(config.seed)
    vocabulary, idf = build_vocabulary(train_texts, config.vocab_size, config.tokenizer)
    X_train = _featurize(train_texts, vocabulary, idf, config.tokenizer)
    X_val = _featurize([s.text for s in split.validation], vocabulary, idf, config.tokenizer)
    y_val = _labels_array(split.validation)

    params = _init_params(len(vocabulary), config.hidden_units, rng)
    optimizer = _Adam(params, lr=config.learning_rate)
    keep_prob = 1.0 - config.dropout
    n = X_train.shape[0]

    history: list[EpochStats] = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            drop_mask = None
            if config.dropout > 0:
                drop_mask = (rng.random((len(batch), config.hidden_units)) < keep_prob).astype(np.float64)
            _, grads = loss_and_gradients(params, X_train[batch], y_train[batch], drop_mask, keep_prob)
            optimizer.step(params, grads)

        train_loss, train_acc = _evaluate(params, X_train, y_train)
        val_loss, val_acc = _evaluate(params, X_val, y_val)
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise NonFiniteLossError(epoch)
        history.append(EpochStats(train_loss, train_acc, val_loss, val_acc))

    return TrainedModel(vocabulary=vocabulary, idf=idf, params=params, history=history, config=config)


def _evaluate(params: NetParams, X: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    if X.shape[0] == 0:
        return 0.0, 0.0
    logits = _forward(X, params)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-log_probs[np.arange(len(y)), y].mean())
    accuracy = float((logits.argmax(axis=1) == y).mean())
    return loss, accuracy


# --- serialization -------------------------------------------------------------


def save_model(model: TrainedModel, path: str | Path) -> None:
    """Write the versioned model file: magic, header, float64 blobs, checksum."""
    header = {
        "config": {
            "hidden_units": model.config.hidden_units,
            "dropout": model.config.dropout,
            "learning_rate": model.config.learning_rate,
            "epochs": model.config.epochs,
            "batch_size": model.config.batch_size,
            "vocab_size": model.config.vocab_size,
            "seed": model.config.seed,
        },
        "tokenizer": {
            "max_len": model.config.tokenizer.max_len,
            "lowercase": model.config.tokenizer.lowercase,
            "add_markers": model.config.tokenizer.add_markers,
        },
        "vocab": sorted(model.vocabulary, key=model.vocabulary.get),
        "shapes": {k: list(v.shape) for k, v in model.params.arrays().items()},
        "history": [
            [h.train_loss, h.train_accuracy, h.val_loss, h.val_accuracy] for h in model.history
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blobs = [model.idf] + [model.params.arrays()[k] for k in ("w1", "b1", "w2", "b2")]
    payload = b"".join(np.ascontiguousarray(b, dtype="<f8").tobytes() for b in blobs)

    body = MODEL_MAGIC + struct.pack("<I", MODEL_FORMAT_VERSION)
    body += struct.pack("<I", len(header_bytes)) + header_bytes + payload
    digest = hashlib.sha256(body).digest()
    Path(path).write_bytes(body + digest)


def load_model(path: str | Path) -> TrainedModel:
    data = Path(path).read_bytes()
    if len(data) < 44 or data[:4] != MODEL_MAGIC:
        raise CorruptFileError(f"{path}: not a model file")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptFileError(f"{path}: checksum mismatch")
    version = struct.unpack("<I", body[4:8])[0]
    if version > MODEL_FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version} is newer than supported {MODEL_FORMAT_VERSION}")

    header_len = struct.unpack("<I", body[8:12])[0]
    header = json.loads(body[12 : 12 + header_len].decode("utf-8"))
    cursor = 12 + header_len

    vocab_list = header["vocab"]
    shapes = header["shapes"]
    sizes = {"idf": len(vocab_list), **{k: int(np.prod(shapes[k])) for k in shapes}}
    arrays = {}
    for name in ("idf", "w1", "b1", "w2", "b2"):
        count = sizes[name]
        end = cursor + 8 * count
        if end > len(body):
            raise CorruptFileError(f"{path}: truncated parameter blob {name}")
        arrays[name] = np.frombuffer(body[cursor:end], dtype="<f8").copy()
        cursor = end
    for name in ("w1", "b1", "w2", "b2"):
        arrays[name] = arrays[name].reshape(shapes[name])

    config = BaselineConfig(
        tokenizer=TokenizerConfig(**header["tokenizer"]), **header["config"]
    )
    history = [EpochStats(*row) for row in header["history"]]
    return TrainedModel(
        vocabulary={tok: i for i, tok in enumerate(vocab_list)},
        idf=arrays["idf"],
        params=NetParams(arrays["w1"], arrays["b1"], arrays["w2"], arrays["b2"]),
        history=history,
        config=config,
    )


def with_seed(config: BaselineConfig, seed: int) -> BaselineConfig:
    return replace(config, seed=seed)
