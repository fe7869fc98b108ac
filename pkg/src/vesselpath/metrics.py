"""Evaluation against ground-truth path classes.

Cluster indices are arbitrary, so predictions are first mapped onto class
labels by the one-to-one assignment that maximises the confusion-matrix
diagonal. The multiclass matrix is then reduced per class to a one-vs-all
table for precision, recall and F1.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

OTHER = "OTHER"
SCHEMA = "vesselpath.metrics/1"


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    class_order: tuple
    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        k = len(self.class_order)
        if c.shape != (k, k):
            raise EvaluationError(f"counts shape {c.shape} does not match {k} classes")
        if np.any(c < 0):
            raise EvaluationError("confusion counts must be nonnegative")
        c.setflags(write=False)
        object.__setattr__(self, "class_order", tuple(self.class_order))
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def index(self, label) -> int:
        try:
            return self.class_order.index(label)
        except ValueError:
            raise EvaluationError(f"unknown label {label!r}") from None


@dataclass(frozen=True)
class BinaryCounts:
    tp: int
    fp: int
    fn: int
    tn: int


@dataclass(frozen=True)
class ClassMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    degenerate: bool = False


@dataclass(frozen=True)
class Alignment:
    mapping: dict            # cluster index -> class label (or OTHER)
    predicted: dict          # voyage id -> aligned label


def align_labels(predicted, truth: Mapping[str, str], class_order: Sequence[str] | None = None) -> Alignment:
    """Map cluster indices to labels by optimal one-to-one assignment.

    ``predicted`` is a ClusterAssignment or a ``{voyage_id: cluster}`` dict.
    Clusters left without a label map to ``OTHER``.
    """
    pred = predicted.as_dict() if hasattr(predicted, "as_dict") else dict(predicted)
    if set(pred) != set(truth):
        raise EvaluationError("predicted and truth voyage id sets differ")
    labels = list(class_order) if class_order is not None else sorted(set(truth.values()))
    clusters = sorted(set(pred.values()))
    table = np.zeros((len(clusters), len(labels)), dtype=np.int64)
    ci = {c: n for n, c in enumerate(clusters)}
    li = {lab: n for n, lab in enumerate(labels)}
    for vid, c in pred.items():
        table[ci[c], li[truth[vid]]] += 1
    rows, cols = linear_sum_assignment(table, maximize=True)
    mapping = {c: OTHER for c in clusters}
    for r, c in zip(rows, cols):
        mapping[clusters[r]] = labels[c]
    return Alignment(mapping, {vid: mapping[c] for vid, c in pred.items()})


def confusion(actual: Sequence[str], predicted: Sequence[str], class_order: Sequence[str]) -> ConfusionMatrix:
    if len(actual) != len(predicted):
        raise EvaluationError("actual and predicted lengths differ")
    order = tuple(class_order)
    pos = {lab: n for n, lab in enumerate(order)}
    counts = np.zeros((len(order), len(order)), dtype=np.int64)
    for a, p in zip(actual, predicted):
        if a not in pos:
            raise EvaluationError(f"unknown actual label {a!r}")
        if p not in pos:
            raise EvaluationError(f"unknown predicted label {p!r}")
        counts[pos[a], pos[p]] += 1
    return ConfusionMatrix(order, counts)


def one_vs_all(cm: ConfusionMatrix, label) -> BinaryCounts:
    i = cm.index(label)
    tp = int(cm.counts[i, i])
    fp = int(cm.counts[:, i].sum()) - tp
    fn = int(cm.counts[i, :].sum()) - tp
    return BinaryCounts(tp, fp, fn, cm.total - tp - fp - fn)


def class_metrics(bc: BinaryCounts, label: str = "") -> ClassMetrics:
    """Precision, recall and F1; any 0/0 ratio is reported as 0 and flagged."""
    degenerate = False

    def ratio(num, den):
        nonlocal degenerate
        if den == 0:
            degenerate = True
            return 0.0
        return num / den

    p = ratio(bc.tp, bc.tp + bc.fp)
    r = ratio(bc.tp, bc.tp + bc.fn)
    f1 = ratio(2.0 * p * r, p + r)
    return ClassMetrics(label, p, r, f1, degenerate)


def evaluate(actual: Mapping[str, str], predicted: Mapping[str, str],
             class_order: Sequence[str] | None = None) -> tuple:
    """Confusion matrix and per-class metrics over the truth classes."""
    if set(actual) != set(predicted):
        raise EvaluationError("predicted and truth voyage id sets differ")
    order = list(class_order) if class_order is not None else sorted(set(actual.values()))
    extra = sorted(set(predicted.values()) - set(order))
    ids = sorted(actual)
    cm = confusion([actual[v] for v in ids], [predicted[v] for v in ids], order + extra)
    per_class = [class_metrics(one_vs_all(cm, lab), lab) for lab in order]
    return cm, per_class


def format_table(per_class: Sequence[ClassMetrics]) -> str:
    width = max([len("Paths")] + [len(m.label) for m in per_class])
    lines = [f"{'Paths':<{width}}  {'Precision':>9}  {'Recall':>9}  {'F1-score':>9}"]
    for m in per_class:
        lines.append(f"{m.label:<{width}}  {m.precision:>9.3f}  {m.recall:>9.3f}  {m.f1:>9.3f}")
    return "\n".join(lines)


def format_confusion(cm: ConfusionMatrix) -> str:
    labels = list(cm.class_order)
    w = max(6, *(len(x) for x in labels))
    head = f"{'Actual':<{w}}" + "".join(f"{x:>{w}}" for x in labels) + f"{'Total':>{w}}"
    lines = [head]
    for lab, row in zip(labels, cm.counts):
        lines.append(f"{lab:<{w}}" + "".join(f"{int(x):>{w}}" for x in row) + f"{int(row.sum()):>{w}}")
    col = cm.counts.sum(axis=0)
    lines.append(f"{'Total':<{w}}" + "".join(f"{int(x):>{w}}" for x in col) + f"{cm.total:>{w}}")
    return "\n".join(lines)


def report_json(cm: ConfusionMatrix, per_class: Sequence[ClassMetrics],
                alignment: Mapping | None = None) -> dict:
    return {
        "schema": SCHEMA,
        "classes": [
            {"label": m.label, "precision": m.precision, "recall": m.recall, "f1": m.f1,
             "degenerate": m.degenerate}
            for m in per_class
        ],
        "confusion": {"class_order": list(cm.class_order), "counts": cm.counts.tolist()},
        "alignment": None if alignment is None else {str(k): v for k, v in alignment.items()},
    }


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=False)
