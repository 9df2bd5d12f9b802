"""Confusion-matrix metrics: accuracy plus per-class and macro precision/recall/F1."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from crab.errors import ContractError, DimensionError


def confusion_matrix(y_true: Sequence[int], y_pred: Sequence[int], num_classes: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    y_true, y_pred = np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise DimensionError(f"{y_true.shape} true labels vs {y_pred.shape} predictions")
    out = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(out, (y_true, y_pred), 1)
    return out


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    # 0/0 counts as 0: a class never predicted (or never present) scores nothing
    return np.divide(num, den, out=np.zeros(num.shape, dtype=np.float64), where=den > 0)


@dataclass(frozen=True)
class EvalReport:
    confusion: np.ndarray
    class_names: tuple[str, ...]

    @classmethod
    def from_predictions(cls, y_true, y_pred, class_names: Sequence[str]) -> EvalReport:
        return cls(confusion_matrix(y_true, y_pred, len(class_names)), tuple(class_names))

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.confusion) / self.total) if self.total else 0.0

    @property
    def precision(self) -> np.ndarray:
        return _safe_div(np.diag(self.confusion).astype(np.float64), self.confusion.sum(axis=0).astype(np.float64))

    @property
    def recall(self) -> np.ndarray:
        return _safe_div(np.diag(self.confusion).astype(np.float64), self.confusion.sum(axis=1).astype(np.float64))

    @property
    def f1(self) -> np.ndarray:
        p, r = self.precision, self.recall
        return _safe_div(2 * p * r, p + r)

    @property
    def macro_precision(self) -> float:
        return float(self.precision.mean())

    @property
    def macro_recall(self) -> float:
        return float(self.recall.mean())

    @property
    def macro_f1(self) -> float:
        return float(self.f1.mean())

    def __add__(self, other: EvalReport) -> EvalReport:
        if self.class_names != other.class_names:
            raise ContractError("cannot merge reports over different classes")
        return EvalReport(self.confusion + other.confusion, self.class_names)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy, "macro_f1": self.macro_f1,
            "macro_recall": self.macro_recall, "macro_precision": self.macro_precision,
            "per_class": {name: {"precision": float(p), "recall": float(r), "f1": float(f), "support": int(n)}
                          for name, p, r, f, n in zip(self.class_names, self.precision, self.recall, self.f1,
                                                      self.confusion.sum(axis=1))},
            "confusion": self.confusion.tolist(),
        }

    def format(self) -> str:
        """Plain-text report; rates at 4 decimals, headline metrics as accuracy, F1, R, P."""
        lines = [
            "# crab-eval v1",
            f"examples\t{self.total}",
            f"accuracy\t{self.accuracy:.4f}",
            f"macro_f1\t{self.macro_f1:.4f}",
            f"macro_recall\t{self.macro_recall:.4f}",
            f"macro_precision\t{self.macro_precision:.4f}",
            "",
            "class\tprecision\trecall\tf1\tsupport",
        ]
        support = self.confusion.sum(axis=1)
        for i, name in enumerate(self.class_names):
            lines.append(f"{name}\t{self.precision[i]:.4f}\t{self.recall[i]:.4f}\t{self.f1[i]:.4f}\t{support[i]}")
        lines += ["", "confusion (rows=true, cols=predicted)", "\t".join(["", *self.class_names])]
        for i, name in enumerate(self.class_names):
            lines.append("\t".join([name, *(str(v) for v in self.confusion[i])]))
        return "\n".join(lines) + "\n"
