"""Classification evaluation: confusion counts, per-class report, ROC-AUC.

Fake is the positive class throughout; per-class rows are produced by
computing the confusion in both orientations. Cells that would be 0/0 are
reported as 0 with a degenerate flag so serialized reports stay numeric.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Label
from .errors import (
    EmptyInputError,
    InconsistentCountsError,
    LengthMismatchError,
    SingleClassError,
)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    degenerate: bool = False


@dataclass(frozen=True)
class ClassificationReport:
    accuracy: float
    per_class: dict[Label, ClassMetrics]

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class": {
                label.value: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                    "degenerate": m.degenerate,
                }
                for label, m in self.per_class.items()
            },
        }


@dataclass(frozen=True)
class AucResult:
    auc: float
    curve: tuple[tuple[float, float], ...]  # (fpr, tpr) per distinct threshold

    def to_dict(self) -> dict:
        return {"auc": self.auc, "curve": [list(point) for point in self.curve]}


def confusion(
    predictions: Sequence[Label], truths: Sequence[Label], positive: Label = Label.FAKE
) -> ConfusionCounts:
    if len(predictions) != len(truths):
        raise LengthMismatchError(f"{len(predictions)} predictions vs {len(truths)} truths")
    if not predictions:
        raise EmptyInputError("no samples to evaluate")
    tp = fp = tn = fn = 0
    for pred, truth in zip(predictions, truths):
        if pred is positive:
            if truth is positive:
                tp += 1
            else:
                fp += 1
        else:
            if truth is positive:
                fn += 1
            else:
                tn += 1
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def _class_metrics(counts: ConfusionCounts) -> ClassMetrics:
    degenerate = False
    if counts.tp + counts.fp == 0:
        precision, degenerate = 0.0, True
    else:
        precision = counts.tp / (counts.tp + counts.fp)
    if counts.tp + counts.fn == 0:
        recall, degenerate = 0.0, True
    else:
        recall = counts.tp / (counts.tp + counts.fn)
    if precision + recall == 0:
        f1, degenerate = 0.0, True
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return ClassMetrics(
        precision=precision,
        recall=recall,
        f1=f1,
        support=counts.tp + counts.fn,
        degenerate=degenerate,
    )


def report(counts_real: ConfusionCounts, counts_fake: ConfusionCounts) -> ClassificationReport:
    """Build the per-class report from both confusion orientations."""
    mirrored = (
        counts_real.tp == counts_fake.tn
        and counts_real.tn == counts_fake.tp
        and counts_real.fp == counts_fake.fn
        and counts_real.fn == counts_fake.fp
    )
    if not mirrored or counts_real.total != counts_fake.total:
        raise InconsistentCountsError("confusion orientations do not describe the same samples")
    accuracy = (counts_fake.tp + counts_fake.tn) / counts_fake.total
    return ClassificationReport(
        accuracy=accuracy,
        per_class={
            Label.REAL: _class_metrics(counts_real),
            Label.FAKE: _class_metrics(counts_fake),
        },
    )


def classification_report(predictions: Sequence[Label], truths: Sequence[Label]) -> ClassificationReport:
    return report(
        confusion(predictions, truths, positive=Label.REAL),
        confusion(predictions, truths, positive=Label.FAKE),
    )


def roc_auc(scores: Sequence[float], truths: Sequence[Label]) -> AucResult:
    """AUC from the rank statistic with ties credited one half, plus the
    ROC curve swept over every distinct score."""
    if len(scores) != len(truths):
        raise LengthMismatchError(f"{len(scores)} scores vs {len(truths)} truths")
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.array([t is Label.FAKE for t in truths])
    n_pos = int(positives.sum())
    n_neg = len(truths) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("ROC-AUC needs both classes present")

    ranks = _average_ranks(scores)
    u_statistic = float(ranks[positives].sum()) - n_pos * (n_pos + 1) / 2
    auc = u_statistic / (n_pos * n_neg)

    curve = [(0.0, 0.0)]
    for threshold in sorted(set(scores.tolist()), reverse=True):
        predicted_pos = scores >= threshold
        tpr = float((predicted_pos & positives).sum()) / n_pos
        fpr = float((predicted_pos & ~positives).sum()) / n_neg
        curve.append((fpr, tpr))
    if curve[-1] != (1.0, 1.0):
        curve.append((1.0, 1.0))
    return AucResult(auc=auc, curve=tuple(curve))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties replaced by their group average."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


REPORT_COLUMNS = ("partition", "level", "accuracy", "label", "recall", "precision", "f1")


def write_report_csv(reports: dict[str, ClassificationReport], level: int, path: str | Path) -> None:
    """One row per class per partition, shaped like the per-level result tables."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(REPORT_COLUMNS)
        for partition, rep in reports.items():
            for label in (Label.REAL, Label.FAKE):
                m = rep.per_class[label]
                writer.writerow(
                    [
                        partition,
                        level,
                        f"{rep.accuracy:.6f}",
                        label.value,
                        f"{m.recall:.6f}",
                        f"{m.precision:.6f}",
                        f"{m.f1:.6f}",
                    ]
                )


def write_roc_csv(result: AucResult, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["fpr", "tpr"])
        for fpr, tpr in result.curve:
            writer.writerow([f"{fpr:.6f}", f"{tpr:.6f}"])
