"""Confusion matrices and the per-class accuracy table."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyDataset

METRIC_NAMES = ("tp_rate", "fp_rate", "precision", "recall", "f_measure", "mcc")


@dataclass(frozen=True)
class ConfusionMatrix:
    class_names: tuple[str, ...]
    counts: np.ndarray      # counts[i, j]: true class i predicted as j

    @classmethod
    def from_labels(cls, true: Sequence[str], pred: Sequence[str],
                    class_names: Sequence[str]) -> ConfusionMatrix:
        index = {c: i for i, c in enumerate(class_names)}
        counts = np.zeros((len(class_names), len(class_names)), dtype=np.int64)
        for t, p in zip(true, pred, strict=True):
            counts[index[t], index[p]] += 1
        return cls(tuple(class_names), counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ClassMetrics:
    tp_rate: float
    fp_rate: float
    precision: float
    recall: float
    f_measure: float
    mcc: float
    support: int

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES + ("support",)}


@dataclass(frozen=True)
class EvaluationReport:
    confusion: ConfusionMatrix
    per_class: tuple[ClassMetrics, ...]
    weighted: ClassMetrics
    accuracy: float

    @property
    def class_names(self) -> tuple[str, ...]:
        return self.confusion.class_names

    def to_json(self) -> dict:
        rows = [dict(m.as_dict(), **{"class": c}) for c, m in zip(self.class_names, self.per_class)]
        return {
            "accuracy": self.accuracy,
            "accuracy_percent": 100.0 * self.accuracy,
            "n_evaluated": self.confusion.total,
            "per_class": rows,
            "weighted_avg": dict(self.weighted.as_dict(), **{"class": "Weighted Avg."}),
            "confusion_matrix": {"class_names": list(self.class_names),
                                 "counts": self.confusion.counts.tolist()},
        }


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def class_metrics(tp: int, fp: int, fn: int, tn: int) -> ClassMetrics:
    tp_rate = _ratio(tp, tp + fn)
    precision = _ratio(tp, tp + fp)
    pr = precision + tp_rate
    f_measure = 2 * precision * tp_rate / pr if pr else 0.0
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = (tp * tn - fp * fn) / math.sqrt(den) if den else 0.0
    return ClassMetrics(tp_rate, _ratio(fp, fp + tn), precision, tp_rate, f_measure, mcc, tp + fn)


def report_from_confusion(cm: ConfusionMatrix) -> EvaluationReport:
    counts = cm.counts
    total = int(counts.sum())
    if total == 0:
        raise EmptyDataset("no evaluated instances")
    per_class = []
    for k in range(len(cm.class_names)):
        tp = int(counts[k, k])
        fn = int(counts[k].sum()) - tp
        fp = int(counts[:, k].sum()) - tp
        per_class.append(class_metrics(tp, fp, fn, total - tp - fn - fp))
    weighted = ClassMetrics(
        *(sum(m.support * getattr(m, name) for m in per_class) / total for name in METRIC_NAMES),
        support=total,
    )
    return EvaluationReport(cm, tuple(per_class), weighted, float(np.trace(counts)) / total)


def render_table(report: EvaluationReport) -> str:
    header = ["TP Rate", "FP Rate", "Precision", "Recall", "F-Measure", "MCC", "Class"]
    lines = ["  ".join(f"{h:>9}" for h in header[:-1]) + "  Class"]

    def row(m: ClassMetrics, name: str) -> str:
        return "  ".join(f"{getattr(m, k):9.3f}" for k in METRIC_NAMES) + f"  {name}"

    lines += [row(m, c) for c, m in zip(report.class_names, report.per_class)]
    lines.append(row(report.weighted, "Weighted Avg."))
    lines.append(f"Accuracy: {100 * report.accuracy:.4f}% of {report.confusion.total}")
    return "\n".join(lines)
