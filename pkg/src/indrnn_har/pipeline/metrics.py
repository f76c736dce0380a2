"""Confusion matrices, per-class precision/recall and macro F1."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """Counts with rows = truth and columns = prediction."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"label arrays differ in shape: {y_true.shape} vs {y_pred.shape}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


@dataclass(frozen=True)
class EvalReport:
    confusion: np.ndarray
    per_class_precision: np.ndarray
    per_class_recall: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float
    class_names: Optional[tuple] = None

    @classmethod
    def from_confusion(cls, confusion, class_names: Optional[Sequence[str]] = None) -> "EvalReport":
        """Build a report from a confusion matrix.

        Precision and recall are averaged over all classes first and the F1
        is the harmonic mean of those two averages. A class never predicted
        has precision 0; a class with no support has recall 0.
        """
        cm = np.asarray(confusion, dtype=np.int64)
        if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or (cm < 0).any():
            raise ValueError("confusion must be a square matrix of non-negative counts")
        tp = np.diag(cm).astype(np.float64)
        predicted = cm.sum(axis=0)
        support = cm.sum(axis=1)
        precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
        recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
        # correctly rounded sums, so the result does not depend on summation order
        mp = math.fsum(precision) / len(precision)
        mr = math.fsum(recall) / len(recall)
        f1 = 2 * mp * mr / (mp + mr) if mp + mr > 0 else 0.0
        names = tuple(class_names) if class_names is not None else None
        return cls(cm, precision, recall, mp, mr, f1, names)

    @property
    def accuracy(self) -> float:
        total = self.confusion.sum()
        return float(np.trace(self.confusion) / total) if total else 0.0

    @property
    def n_classes(self) -> int:
        return self.confusion.shape[0]

    def _names(self) -> list[str]:
        return list(self.class_names) if self.class_names else [str(i) for i in range(self.n_classes)]

    def to_dict(self) -> dict:
        return {
            "class_names": self._names(),
            "confusion": self.confusion.tolist(),
            "per_class_precision": [float(v) for v in self.per_class_precision],
            "per_class_recall": [float(v) for v in self.per_class_recall],
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "accuracy": self.accuracy,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls.from_confusion(np.array(d["confusion"]), d.get("class_names"))

    def to_text(self) -> str:
        names = self._names()
        w = max(8, *(len(n) for n in names))
        lines = ["confusion (rows = truth, columns = prediction)"]
        lines.append(" " * w + " " + " ".join(f"{n[:w]:>{w}}" for n in names))
        for name, row in zip(names, self.confusion):
            lines.append(f"{name:>{w}} " + " ".join(f"{v:>{w}d}" for v in row))
        lines.append("")
        lines.append(f"{'class':>{w}} {'precision':>10} {'recall':>10} {'support':>8}")
        for name, p, r, s in zip(names, self.per_class_precision, self.per_class_recall, self.confusion.sum(axis=1)):
            lines.append(f"{name:>{w}} {p:>10.4f} {r:>10.4f} {s:>8d}")
        lines.append("")
        lines.append(f"macro precision {self.macro_precision:.4f}")
        lines.append(f"macro recall    {self.macro_recall:.4f}")
        lines.append(f"macro F1        {self.macro_f1:.4f}")
        lines.append(f"accuracy        {self.accuracy:.4f}")
        return "\n".join(lines) + "\n"


def report(y_true, y_pred, n_classes: int, class_names=None) -> EvalReport:
    return EvalReport.from_confusion(confusion_matrix(y_true, y_pred, n_classes), class_names)
