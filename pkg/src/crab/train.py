"""Empirical-risk minimisation: losses, Adam, the training loop and evaluation."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

import crab.tensor as T
from crab.dataset import LabeledCorpus, batches
from crab.errors import ConfigError, ContractError, DimensionError, NumericError
from crab.metrics import EvalReport
from crab.model import CrabModel
from crab.rng import derive_seed
from crab.tensor import Tensor

logger = logging.getLogger(__name__)

BATCH_ORDER_STREAM = 3
HISTORY_HEADER = "# crab-history v1"


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 10
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    early_stop_patience: int | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        for b in (self.adam_beta1, self.adam_beta2):
            if not 0.0 < b < 1.0:
                raise ConfigError(f"Adam betas must lie in (0, 1), got {b}")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ConfigError(f"early_stop_patience must be >= 1, got {self.early_stop_patience}")

    def to_dict(self) -> dict:
        return asdict(self)


def _check_one_hot(onehot: np.ndarray, c: int) -> np.ndarray:
    y = np.asarray(onehot, dtype=np.float64)
    if y.shape[-1] != c:
        raise DimensionError(f"labels have {y.shape[-1]} classes, scores have {c}")
    if not (np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=-1) == 1)):
        raise ContractError("labels must be one-hot rows")
    return y


def cross_entropy_loss(scores: Tensor, onehot: np.ndarray) -> Tensor:
    """Mean over the batch of ``-sum_j y_j log softmax(s)_j``.

    ``scores`` is ``c x 1`` or ``batch x c x 1``; ``onehot`` is ``c`` or ``batch x c``.
    """
    c = scores.shape[-2]
    y = _check_one_hot(onehot, c)
    batch = 1 if scores.ndim == 2 else scores.shape[0]
    picked = T.sum(T.log_softmax(scores, axis=-2) * y[..., None])
    return T.mul(picked, -1.0 / batch)


def binary_cross_entropy_loss(scores: Tensor, targets: np.ndarray) -> Tensor:
    """Per-class sigmoid loss ``softplus(s) - y*s`` summed over classes, mean over batch."""
    y = np.asarray(targets, dtype=np.float64)
    batch = 1 if scores.ndim == 2 else scores.shape[0]
    return T.mul(T.sum(T.softplus(scores) - scores * y[..., None]), 1.0 / batch)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> AdamState:
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              config: TrainConfig) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update. Inputs are left untouched."""
    b1, b2, lr, eps = config.adam_beta1, config.adam_beta2, config.learning_rate, config.adam_eps
    t = state.step + 1
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape or state.m[name].shape != p.shape:
            raise DimensionError(f"{name}: param {p.shape}, grad {g.shape}, moment {state.m[name].shape}")
        m = b1 * state.m[name] + (1 - b1) * g
        v = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(new_m, new_v, t)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_macro_f1: float | None
    val_accuracy: float | None


@dataclass
class History:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    def format(self) -> str:
        """Versioned log: ``epoch<TAB>train_loss<TAB>val_macro_f1<TAB>val_accuracy``; ``-`` when no val set."""
        def num(x):
            return "-" if x is None else f"{x:.6f}"

        rows = [HISTORY_HEADER, "epoch\ttrain_loss\tval_macro_f1\tval_accuracy"]
        rows += [f"{r.epoch}\t{r.train_loss:.6f}\t{num(r.val_macro_f1)}\t{num(r.val_accuracy)}" for r in self.epochs]
        return "\n".join(rows) + "\n"

    def to_dict(self) -> dict:
        return {"best_epoch": self.best_epoch, "epochs": [asdict(r) for r in self.epochs]}


@dataclass
class EncodedSet:
    ids: np.ndarray
    mask: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    @classmethod
    def from_corpus(cls, model: CrabModel, corpus: LabeledCorpus) -> EncodedSet:
        ids, mask = model.encode_texts(corpus.texts)
        return cls(ids, mask, np.asarray(corpus.labels, dtype=np.int64))


def batch_loss(model: CrabModel, ids: np.ndarray, mask: np.ndarray, labels: np.ndarray) -> Tensor:
    _, scores = model.scores(ids, mask)
    onehot = np.eye(model.head_config.c)[labels]
    if model.head_config.output_mode == "sigmoid":
        return binary_cross_entropy_loss(scores, onehot)
    return cross_entropy_loss(scores, onehot)


def evaluate_encoded(model: CrabModel, data: EncodedSet) -> EvalReport:
    if len(data) == 0:
        raise ContractError("empty evaluation set")
    pred = np.argmax(model.predict_proba(data.ids, data.mask), axis=-1)
    return EvalReport.from_predictions(data.labels, pred, model.class_names)


def evaluate(model: CrabModel, corpus: LabeledCorpus) -> EvalReport:
    """Confusion matrix and rates of ``model`` on a labelled corpus."""
    if len(corpus) == 0:
        raise ContractError("empty evaluation set")
    return evaluate_encoded(model, EncodedSet.from_corpus(model, corpus))


def fit(model: CrabModel, train_set: LabeledCorpus, val_set: LabeledCorpus | None, config: TrainConfig,
        on_epoch: Callable[[EpochRecord], None] | None = None) -> History:
    """Train ``model`` in place; keeps the parameters of the best validation macro-F1 epoch.

    Without a validation set the final parameters are kept and early stopping is off.
    """
    if len(train_set) == 0:
        raise ContractError("empty training set")
    train = EncodedSet.from_corpus(model, train_set)
    val = EncodedSet.from_corpus(model, val_set) if val_set is not None and len(val_set) else None
    params = model.parameters()
    state = AdamState.zeros_like({k: t.data for k, t in params.items()})
    history = History()
    best_f1, best_snapshot, stale = -math.inf, None, 0

    for epoch in range(1, config.epochs + 1):
        order = batches(np.arange(len(train)), config.batch_size,
                        shuffle_seed=derive_seed(config.seed, BATCH_ORDER_STREAM, epoch))
        total = 0.0
        for b, idx in enumerate(order, start=1):
            idx = np.asarray(idx)
            for t in params.values():
                t.zero_grad()
            loss = batch_loss(model, train.ids[idx], train.mask[idx], train.labels[idx])
            value = loss.item()
            if not math.isfinite(value):
                raise NumericError(f"non-finite loss {value} at epoch {epoch}, batch {b}")
            T.backward(loss)
            grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in params.items()}
            new, state = adam_step({k: t.data for k, t in params.items()}, grads, state, config)
            for k, t in params.items():
                t.data = new[k]
            total += value * len(idx)

        record = EpochRecord(epoch, total / len(train), None, None)
        if val is not None:
            report = evaluate_encoded(model, val)
            record = EpochRecord(epoch, record.train_loss, report.macro_f1, report.accuracy)
            if report.macro_f1 > best_f1:
                best_f1, best_snapshot, stale = report.macro_f1, model.snapshot(), 0
                history.best_epoch = epoch
            else:
                stale += 1
        else:
            history.best_epoch = epoch
        history.epochs.append(record)
        logger.info("epoch %d loss %.6f val_f1 %s", epoch, record.train_loss, record.val_macro_f1)
        if on_epoch is not None:
            on_epoch(record)
        if val is not None and config.early_stop_patience is not None and stale >= config.early_stop_patience:
            break

    if best_snapshot is not None:
        model.restore(best_snapshot)
    for t in params.values():
        t.zero_grad()
    return history
