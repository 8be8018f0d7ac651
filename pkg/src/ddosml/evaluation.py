"""Confusion matrices, per-label precision/recall/F1 and one-vs-rest ROC.

Metrics whose denominator is zero are ``None`` rather than 0 or NaN, and
render as ``UNDEFINED`` in tables.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from .exceptions import ArgumentError, DegenerateROCError, UndefinedMetricError

UNDEFINED = "n/a"


def scores_to_prediction(scores) -> int:
    """Argmax of a score vector; ties go to the lowest index."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise ArgumentError("scores must be a non-empty vector")
    if np.isnan(scores).any():
        raise ArgumentError("scores contain NaN")
    return int(np.argmax(scores))


def predictions_from_scores(score_matrix) -> np.ndarray:
    score_matrix = np.asarray(score_matrix, dtype=np.float64)
    if np.isnan(score_matrix).any():
        raise ArgumentError("scores contain NaN")
    if score_matrix.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return np.argmax(score_matrix, axis=1)


@dataclass(frozen=True)
class ConfusionMatrix:
    """``counts[i, j]`` = rows with true label ``i`` predicted as ``j``."""

    counts: np.ndarray

    @property
    def n_labels(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion_matrix(truth, predicted, n_labels: int) -> ConfusionMatrix:
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.shape != predicted.shape:
        raise ArgumentError(f"{truth.size} truth labels vs {predicted.size} predictions")
    if truth.size and (max(truth.max(), predicted.max()) >= n_labels
                       or min(truth.min(), predicted.min()) < 0):
        raise ArgumentError(f"label outside [0, {n_labels})")
    counts = np.zeros((n_labels, n_labels), dtype=np.int64)
    np.add.at(counts, (truth, predicted), 1)
    return ConfusionMatrix(counts)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise UndefinedMetricError("accuracy of an empty confusion matrix")
    return float(np.trace(cm.counts) / cm.total)


@dataclass(frozen=True)
class ClassMetrics:
    label: int
    precision: float | None
    recall: float | None
    f1: float | None
    support: int


def _ratio(num, den):
    return None if den == 0 else num / den


def class_metrics(cm: ConfusionMatrix, label: int) -> ClassMetrics:
    if not 0 <= label < cm.n_labels:
        raise ArgumentError(f"label {label} outside [0, {cm.n_labels})")
    tp = int(cm.counts[label, label])
    predicted = int(cm.counts[:, label].sum())
    support = int(cm.counts[label].sum())
    precision = _ratio(tp, predicted)
    recall = _ratio(tp, support)
    f1 = None
    if precision is not None and recall is not None:
        f1 = _ratio(2 * precision * recall, precision + recall)
    return ClassMetrics(label, precision, recall, f1, support)


@dataclass(frozen=True)
class RocCurve:
    label: int
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def _trapezoid(fpr, tpr) -> float:
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def roc_curve(truth_binary, scores, label: int = 0) -> RocCurve:
    """ROC points from (0, 0) to (1, 1), one per distinct score.

    Tied scores move the curve in one diagonal step. ``thresholds[i]`` is
    the score at or above which rows count as positive for point ``i``; the
    first is ``+inf``.
    """
    truth = np.asarray(truth_binary, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    if truth.shape != scores.shape:
        raise ArgumentError("truth and scores differ in length")
    if np.isnan(scores).any():
        raise ArgumentError("scores contain NaN")
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateROCError("degenerate ROC: need both positive and negative rows")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    t = truth[order]
    last_of_run = np.r_[np.flatnonzero(s[1:] != s[:-1]), s.size - 1]
    tps = np.cumsum(t)[last_of_run]
    fps = np.cumsum(~t)[last_of_run]
    fpr = np.r_[0.0, fps / n_neg]
    tpr = np.r_[0.0, tps / n_pos]
    thresholds = np.r_[np.inf, s[last_of_run]]
    return RocCurve(label, fpr, tpr, thresholds, _trapezoid(fpr, tpr))


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the curve's (fpr, tpr) polyline."""
    return _trapezoid(curve.fpr, curve.tpr)


def _fmt(value, percent=True):
    if value is None:
        return UNDEFINED
    return f"{100 * value:.2f}" if percent else f"{value:.4f}"


@dataclass
class EvalReport:
    label_names: tuple
    confusion: ConfusionMatrix
    metrics: list
    accuracy: float
    roc: dict
    majority_baseline: float
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        labels = []
        for m in self.metrics:
            curve = self.roc.get(m.label)
            labels.append({
                "name": self.label_names[m.label],
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
                "support": m.support,
                "auc": None if curve is None else curve.auc,
            })
        roc = {}
        for lab, curve in self.roc.items():
            if curve is None:
                continue
            roc[self.label_names[lab]] = {
                "fpr": curve.fpr.tolist(),
                "tpr": curve.tpr.tolist(),
                # JSON has no infinity; the leading +inf threshold is null.
                "thresholds": [None] + curve.thresholds[1:].tolist(),
            }
        return {
            "accuracy": self.accuracy,
            "majority_baseline": self.majority_baseline,
            "labels": labels,
            "confusion": self.confusion.counts.tolist(),
            "roc": roc,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d):
        names = tuple(entry["name"] for entry in d["labels"])
        metrics = [ClassMetrics(i, e["precision"], e["recall"], e["f1"], e["support"])
                   for i, e in enumerate(d["labels"])]
        roc = {}
        for i, name in enumerate(names):
            r = d["roc"].get(name)
            if r is None:
                roc[i] = None
                continue
            thresholds = np.array([np.inf] + r["thresholds"][1:], dtype=np.float64)
            roc[i] = RocCurve(i, np.asarray(r["fpr"]), np.asarray(r["tpr"]), thresholds,
                              d["labels"][i]["auc"])
        return cls(names, ConfusionMatrix(np.asarray(d["confusion"], dtype=np.int64)), metrics,
                   d["accuracy"], roc, d["majority_baseline"], d.get("provenance", {}))

    def write_roc_csv(self, fh: IO[str]) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", "threshold", "fpr", "tpr"])
        for lab, curve in self.roc.items():
            if curve is None:
                continue
            for thr, f, t in zip(curve.thresholds.tolist(), curve.fpr.tolist(), curve.tpr.tolist()):
                writer.writerow([self.label_names[lab], repr(thr), repr(f), repr(t)])

    def format_table(self, title: str = "") -> str:
        """Per-label Precision / Recall / F-1 in percent, then accuracy lines."""
        width = max([len(n) for n in self.label_names] + [5])
        lines = []
        if title:
            lines.append(title)
        lines.append(f"{'':<{width}}  {'Precision':>9}  {'Recall':>9}  {'F-1 Score':>9}  {'AUC':>7}  {'Support':>8}")
        for m in self.metrics:
            curve = self.roc.get(m.label)
            lines.append(
                f"{self.label_names[m.label]:<{width}}  {_fmt(m.precision):>9}  {_fmt(m.recall):>9}"
                f"  {_fmt(m.f1):>9}  {_fmt(None if curve is None else curve.auc, False):>7}"
                f"  {m.support:>8}"
            )
        lines.append(f"accuracy           {_fmt(self.accuracy)}")
        lines.append(f"majority baseline  {_fmt(self.majority_baseline)}")
        return "\n".join(lines)


def build_report(truth, score_matrix, label_names: Sequence[str], provenance=None) -> EvalReport:
    """Assemble predictions, confusion matrix, per-label metrics and ROC curves.

    Labels absent from ``truth`` (or present in every row) get no ROC curve.
    """
    truth = np.asarray(truth, dtype=np.int64)
    score_matrix = np.asarray(score_matrix, dtype=np.float64)
    label_names = tuple(label_names)
    n_labels = len(label_names)
    if score_matrix.shape != (truth.size, n_labels):
        raise ArgumentError(f"score matrix shape {score_matrix.shape} != ({truth.size}, {n_labels})")
    predicted = predictions_from_scores(score_matrix)
    cm = confusion_matrix(truth, predicted, n_labels)
    metrics = [class_metrics(cm, c) for c in range(n_labels)]
    roc = {}
    for c in range(n_labels):
        try:
            roc[c] = roc_curve(truth == c, score_matrix[:, c], label=c)
        except DegenerateROCError:
            roc[c] = None
    supports = cm.counts.sum(axis=1)
    return EvalReport(
        label_names=label_names,
        confusion=cm,
        metrics=metrics,
        accuracy=accuracy(cm),
        roc=roc,
        majority_baseline=float(supports.max() / supports.sum()),
        provenance=dict(provenance or {}),
    )


def report_json(report: EvalReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"
