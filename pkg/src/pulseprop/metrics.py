"""Binary evaluation suite.

Positive class is 1 (pulse with motion artifacts). Alongside the usual
precision/recall/F1 the suite carries three imbalance-robust scalars
(Matthews correlation, Cohen's kappa, critical success index) plus the ROC
curve with a trapezoidal AUROC, which equals the probability that a random
positive outranks a random negative with ties counted half.

Metrics whose denominator vanishes are defined as 0 and listed in the
report's `degenerate` field instead of raising or returning NaN, so
reports stay serializable and comparable.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

REPORT_SCHEMA = 1


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class ScalarMetrics:
    precision: float
    recall: float
    f1: float
    precision_by_class: tuple[float, float]
    recall_by_class: tuple[float, float]
    f1_by_class: tuple[float, float]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    mcc: float
    kappa: float
    csi: float
    degenerate: tuple[str, ...]


@dataclass(frozen=True)
class EvaluationReport:
    confusion: ConfusionMatrix
    scalars: ScalarMetrics
    auroc: float
    roc_points: tuple[tuple[float, float], ...]
    n_evaluated: int


def confusion(labels_true, labels_pred) -> ConfusionMatrix:
    t = np.asarray(labels_true, dtype=np.int64)
    p = np.asarray(labels_pred, dtype=np.int64)
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.shape} vs {p.shape}")
    for name, arr in (("labels_true", t), ("labels_pred", p)):
        if not np.isin(arr, (0, 1)).all():
            raise ValueError(f"{name} must contain only 0/1")
    return ConfusionMatrix(
        tp=int(((t == 1) & (p == 1)).sum()),
        fp=int(((t == 0) & (p == 1)).sum()),
        tn=int(((t == 0) & (p == 0)).sum()),
        fn=int(((t == 1) & (p == 0)).sum()),
    )


def scalar_metrics(cm: ConfusionMatrix) -> ScalarMetrics:
    tp, fp, tn, fn = cm.tp, cm.fp, cm.tn, cm.fn
    degenerate: list[str] = []

    def ratio(num, den, name):
        if den == 0:
            degenerate.append(name)
            return 0.0
        return num / den

    precision1 = ratio(tp, tp + fp, "precision_class1")
    recall1 = ratio(tp, tp + fn, "recall_class1")
    f1_1 = ratio(2 * precision1 * recall1, precision1 + recall1, "f1_class1")
    precision0 = ratio(tn, tn + fn, "precision_class0")
    recall0 = ratio(tn, tn + fp, "recall_class0")
    f1_0 = ratio(2 * precision0 * recall0, precision0 + recall0, "f1_class0")

    mcc_num = tp * tn - fp * fn
    mcc_den = math.sqrt(float(tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    mcc = ratio(mcc_num, mcc_den, "mcc")

    kappa_den = (tp + fp) * (fp + tn) + (tp + fn) * (fn + tn)
    kappa = ratio(2 * (tp * tn - fp * fn), kappa_den, "kappa")

    csi = ratio(tp, tp + fn + fp, "csi")

    return ScalarMetrics(
        precision=precision1,
        recall=recall1,
        f1=f1_1,
        precision_by_class=(precision0, precision1),
        recall_by_class=(recall0, recall1),
        f1_by_class=(f1_0, f1_1),
        macro_precision=(precision0 + precision1) / 2,
        macro_recall=(recall0 + recall1) / 2,
        macro_f1=(f1_0 + f1_1) / 2,
        mcc=mcc,
        kappa=kappa,
        csi=csi,
        degenerate=tuple(degenerate),
    )


def roc_auc(scores, labels_true) -> tuple[tuple[tuple[float, float], ...], float]:
    """ROC points over descending distinct score thresholds, plus the trapezoidal area."""
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(labels_true, dtype=np.int64)
    if s.shape != t.shape:
        raise ValueError("scores and labels must align")
    n_pos = int((t == 1).sum())
    n_neg = int((t == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs at least one positive and one negative")

    order = np.argsort(-s, kind="stable")
    sorted_scores = s[order]
    sorted_truth = t[order]

    points = [(0.0, 0.0)]
    tp = fp = 0
    for i in range(s.size):
        tp += int(sorted_truth[i] == 1)
        fp += int(sorted_truth[i] == 0)
        last_of_tie = i + 1 == s.size or sorted_scores[i + 1] != sorted_scores[i]
        if last_of_tie:
            points.append((fp / n_neg, tp / n_pos))

    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return tuple(points), auc


def evaluate(labels_true, labels_pred, scores) -> EvaluationReport:
    """Full report: confusion matrix, scalar suite, ROC curve."""
    cm = confusion(labels_true, labels_pred)
    points, auc = roc_auc(scores, labels_true)
    return EvaluationReport(
        confusion=cm,
        scalars=scalar_metrics(cm),
        auroc=auc,
        roc_points=points,
        n_evaluated=cm.total,
    )


def report_to_dict(report: EvaluationReport) -> dict:
    doc = {
        "schema": REPORT_SCHEMA,
        "positive_class": 1,
        "n_evaluated": report.n_evaluated,
        "confusion": asdict(report.confusion),
        "auroc": report.auroc,
        "roc_points": [list(p) for p in report.roc_points],
    }
    scalars = asdict(report.scalars)
    scalars["degenerate"] = list(scalars["degenerate"])
    for key in ("precision_by_class", "recall_by_class", "f1_by_class"):
        scalars[key] = list(scalars[key])
    doc["metrics"] = scalars
    return doc


def save_report(report: EvaluationReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report_to_dict(report), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_report(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != REPORT_SCHEMA:
        raise ValueError(f"{path}: unsupported report schema {doc.get('schema')!r}")
    return doc


def save_roc_csv(report: EvaluationReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["fpr", "tpr"])
        for x, y in report.roc_points:
            writer.writerow([repr(x), repr(y)])
