"""Softmax cross-entropy, Adam, stratified splitting, the training loop and metrics."""

from __future__ import annotations

import csv
import json
import logging
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    CappedLossWarning,
    ConfigError,
    EmptyInput,
    LabelError,
    NonFiniteGradient,
    ShapeError,
    StratifyWarning,
)
from .nn.model import AttentionCNN
from .nn.tensor import Tensor

log = logging.getLogger(__name__)

CE_FLOOR = 1e-12


def softmax(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    z = h - h.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    z = h - h.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(p: np.ndarray, y: np.ndarray) -> float:
    """``-sum(y * log p)`` for one probability vector and a one-hot target.

    A zero probability on the true class is floored at 1e-12 and a
    :class:`CappedLossWarning` is emitted.
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeError(f"probabilities {p.shape} vs target {y.shape}")
    p_true = float((p * y).sum())
    if p_true < CE_FLOOR:
        warnings.warn(f"true-class probability {p_true:g} capped at {CE_FLOOR:g}", CappedLossWarning)
        p_true = CE_FLOOR
    return -np.log(p_true)


def softmax_cross_entropy(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean loss over the batch and its gradient w.r.t. the logits (log-sum-exp form)."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    n = logits.shape[0]
    logp = log_softmax(logits)
    loss = -logp[np.arange(n), targets].mean()
    grad = np.exp(logp)
    grad[np.arange(n), targets] -= 1.0
    return float(loss), grad / n


# -- Adam -----------------------------------------------------------------------

@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place. Nothing is touched if any gradient is non-finite."""
    for name, g in grads.items():
        if name not in params:
            raise ShapeError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ShapeError(f"{name}: gradient {g.shape} vs parameter {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(name)
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, g in grads.items():
        p = params[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# -- splitting ------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 64
    max_epochs: int = 100
    split_ratio: float = 0.8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if not 0 < self.split_ratio < 1:
            raise ConfigError("split_ratio must lie strictly between 0 and 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def split_dataset(rows: Sequence, cfg: TrainConfig = TrainConfig()) -> tuple[list, list]:
    """Seeded, label-stratified train/test split; rows come back tagged and in input order."""
    rows = list(rows)
    if not rows:
        raise EmptyInput("cannot split an empty manifest")
    rng = np.random.default_rng(cfg.seed)
    by_label: dict[str, list[int]] = {}
    for i, r in enumerate(rows):
        by_label.setdefault(r.label, []).append(i)

    train_idx: set[int] = set()
    if min(len(v) for v in by_label.values()) < 2:
        small = sorted(k for k, v in by_label.items() if len(v) < 2)
        warnings.warn(f"classes {small} have fewer than 2 samples; using an unstratified split", StratifyWarning)
        order = rng.permutation(len(rows)) if cfg.shuffle else np.arange(len(rows))
        train_idx.update(int(i) for i in order[: _round_half_up(cfg.split_ratio * len(rows))])
    else:
        for label in sorted(by_label):
            idx = np.array(by_label[label])
            if cfg.shuffle:
                idx = idx[rng.permutation(len(idx))]
            train_idx.update(int(i) for i in idx[: _round_half_up(cfg.split_ratio * len(idx))])

    train = [replace(r, split="train") for i, r in enumerate(rows) if i in train_idx]
    test = [replace(r, split="test") for i, r in enumerate(rows) if i not in train_idx]
    return train, test


# -- training ---------------------------------------------------------------------

@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: Optional[float]
    val_acc: Optional[float]
    seconds: float

    def to_json(self) -> str:
        return json.dumps(self.__dict__)


@dataclass
class TrainResult:
    history: list[EpochLog]
    best_state: dict
    best_epoch: int
    best_val_acc: Optional[float]


def _loss_and_acc(model: AttentionCNN, X, y, batch_size: int = 256) -> tuple[float, float]:
    total, correct = 0.0, 0
    for i in range(0, len(X), batch_size):
        logits = model.forward(X[i : i + batch_size], training=False)
        yb = y[i : i + batch_size]
        loss, _ = softmax_cross_entropy(logits, yb)
        total += loss * len(yb)
        correct += int((logits.argmax(axis=1) == yb).sum())
    return total / len(X), correct / len(X)


def train(
    model: AttentionCNN,
    X: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig = TrainConfig(),
    X_val: Optional[np.ndarray] = None,
    y_val: Optional[np.ndarray] = None,
    on_epoch: Optional[Callable[[EpochLog], None]] = None,
) -> TrainResult:
    """Mini-batch Adam on softmax cross-entropy.

    Keeps the parameters of the epoch with the best validation accuracy (the
    last epoch when no validation set is given) and loads them into ``model``
    before returning.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) != len(y):
        raise ShapeError(f"{len(X)} inputs but {len(y)} labels")
    if len(X) == 0:
        raise EmptyInput("no training samples")
    if y.min() < 0 or y.max() >= model.cfg.n_classes:
        raise LabelError(f"label index outside [0, {model.cfg.n_classes})")
    has_val = X_val is not None and len(X_val) > 0
    if has_val:
        X_val = np.asarray(X_val, dtype=np.float64)
        y_val = np.asarray(y_val, dtype=np.int64)

    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    state = AdamState()
    history: list[EpochLog] = []
    best_state, best_epoch, best_acc = model.state_dict(), 0, None
    n = len(X)

    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        loss_sum, correct = 0.0, 0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            logits = model.forward(X[idx], training=True)
            loss, dlogits = softmax_cross_entropy(logits, y[idx])
            grads = model.backward(dlogits)
            try:
                adam_step(params, grads, state, cfg.learning_rate)
            except NonFiniteGradient as exc:
                raise NonFiniteGradient(exc.name, f"epoch {epoch}, batch {b}") from None
            loss_sum += loss * len(idx)
            correct += int((logits.argmax(axis=1) == y[idx]).sum())

        val_loss = val_acc = None
        if has_val:
            val_loss, val_acc = _loss_and_acc(model, X_val, y_val)
        entry = EpochLog(epoch, loss_sum / n, correct / n, val_loss, val_acc, time.perf_counter() - t0)
        history.append(entry)
        log.info("epoch %d loss %.4f acc %.4f val_acc %s", epoch, entry.train_loss, entry.train_acc, val_acc)
        if on_epoch is not None:
            on_epoch(entry)

        if not has_val or best_acc is None or val_acc > best_acc:
            best_state, best_epoch, best_acc = model.state_dict(), epoch, val_acc

    model.load_state_dict(best_state)
    return TrainResult(history, best_state, best_epoch, best_acc)


# -- evaluation ---------------------------------------------------------------------

@dataclass
class EvalReport:
    labels: list[str]
    confusion: np.ndarray  # rows = true class, cols = predicted class

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.confusion)) / self.total if self.total else 0.0

    @property
    def precision(self) -> np.ndarray:
        col = self.confusion.sum(axis=0)
        return np.divide(np.diag(self.confusion), col, out=np.zeros(len(col)), where=col > 0)

    @property
    def recall(self) -> np.ndarray:
        row = self.confusion.sum(axis=1)
        return np.divide(np.diag(self.confusion), row, out=np.zeros(len(row)), where=row > 0)

    def summary(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "n": self.total,
            "labels": list(self.labels),
            "precision": dict(zip(self.labels, self.precision.round(6).tolist())),
            "recall": dict(zip(self.labels, self.recall.round(6).tolist())),
        }

    def write(self, json_path, csv_path) -> None:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2)
            fh.write("\n")
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["true\\pred", *self.labels])
            for lab, row in zip(self.labels, self.confusion):
                w.writerow([lab, *row.tolist()])


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def encode_labels(labels: Sequence[str], classes: Sequence[str]) -> np.ndarray:
    index = {c: i for i, c in enumerate(classes)}
    try:
        return np.array([index[l] for l in labels], dtype=np.int64)
    except KeyError as exc:
        raise LabelError(f"label {exc.args[0]!r} not in the model's classes {list(classes)}") from None


def evaluate_predictions(y_true, y_pred, labels: Sequence[str]) -> EvalReport:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    J = len(labels)
    for arr in (y_true, y_pred):
        if arr.size and (arr.min() < 0 or arr.max() >= J):
            raise LabelError(f"class index outside [0, {J})")
    return EvalReport(list(labels), confusion_matrix(y_true, y_pred, J))


def evaluate(model: AttentionCNN, X: np.ndarray, y_true, labels: Sequence[str]) -> EvalReport:
    """Inference-mode accuracy and confusion matrix; ``y_true`` may be label strings or indices."""
    if len(labels) != model.cfg.n_classes:
        raise LabelError(f"model has {model.cfg.n_classes} classes, {len(labels)} labels given")
    y_true = list(y_true)
    if y_true and isinstance(y_true[0], str):
        y_true = encode_labels(y_true, labels)
    probs = model.predict_proba(np.asarray(X, dtype=np.float64))
    return evaluate_predictions(y_true, probs.argmax(axis=1), labels)
