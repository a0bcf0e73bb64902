"""Classification metrics, ROC/AUC, Dice aggregation and ablation tables."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValidationError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    sensitivity: float
    specificity: float
    f_score: float
    counts: ConfusionCounts
    auc: float | None = None
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "f_score": self.f_score,
            "auc": self.auc,
            "counts": {"tp": self.counts.tp, "tn": self.counts.tn,
                       "fp": self.counts.fp, "fn": self.counts.fn},
            "flags": sorted(self.flags),
        }


def _ratio(num: int, den: int, flag: str, flags: list[str]) -> float:
    # zero denominators report 0.0 and raise a flag rather than NaN
    if den == 0:
        flags.append(flag)
        return 0.0
    return num / den


def confusion_counts(true_labels, pred_labels) -> ConfusionCounts:
    true_labels = np.asarray(true_labels, dtype=int)
    pred_labels = np.asarray(pred_labels, dtype=int)
    if true_labels.size == 0:
        raise ValidationError("no samples to evaluate")
    if true_labels.shape != pred_labels.shape:
        raise ValidationError("labels and predictions differ in length")
    for arr, name in ((true_labels, "labels"), (pred_labels, "predictions")):
        if not np.isin(arr, (0, 1)).all():
            raise ValidationError(f"{name} must be 0 or 1")
    return ConfusionCounts(
        tp=int(((true_labels == 1) & (pred_labels == 1)).sum()),
        tn=int(((true_labels == 0) & (pred_labels == 0)).sum()),
        fp=int(((true_labels == 0) & (pred_labels == 1)).sum()),
        fn=int(((true_labels == 1) & (pred_labels == 0)).sum()),
    )


def metrics_from_counts(c: ConfusionCounts) -> MetricsReport:
    flags: list[str] = []
    return MetricsReport(
        accuracy=_ratio(c.tp + c.tn, c.total, "accuracy_zero_den", flags),
        precision=_ratio(c.tp, c.tp + c.fp, "precision_zero_den", flags),
        sensitivity=_ratio(c.tp, c.tp + c.fn, "sensitivity_zero_den", flags),
        specificity=_ratio(c.tn, c.tn + c.fp, "specificity_zero_den", flags),
        f_score=(c.tp / (c.tp + 0.5 * (c.fp + c.fn))
                 if c.tp + c.fp + c.fn > 0
                 else _ratio(0, 0, "f_score_zero_den", flags)),
        counts=c,
        flags=flags,
    )


def confusion_metrics(true_labels, pred_labels) -> MetricsReport:
    """Accuracy, precision, sensitivity, specificity and F-score (AUC absent)."""
    return metrics_from_counts(confusion_counts(true_labels, pred_labels))


def auc_roc(scores, labels) -> tuple[float, list[tuple[float, float, float]]]:
    """ROC by sweeping all distinct score thresholds; AUC by trapezoid.

    Returns (auc, points) where each point is (fpr, tpr, threshold) and the
    sweep includes the +inf and -inf endpoints.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValidationError("scores and labels must be equal-length vectors")
    pos = int((labels == 1).sum())
    neg = int((labels == 0).sum())
    if pos == 0 or neg == 0:
        raise ValidationError("ROC requires both classes present")

    order = np.argsort(-scores, kind="stable")
    points = [(0.0, 0.0, math.inf)]
    tp = fp = 0
    i = 0
    while i < len(order):
        threshold = scores[order[i]]
        while i < len(order) and scores[order[i]] == threshold:
            if labels[order[i]] == 1:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append((fp / neg, tp / pos, float(threshold)))
    if points[-1][:2] != (1.0, 1.0):
        points.append((1.0, 1.0, -math.inf))
    else:
        points[-1] = (1.0, 1.0, -math.inf)

    auc = 0.0
    for (x0, y0, _), (x1, y1, _) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return auc, points


@dataclass(frozen=True)
class DiceSummary:
    mean: float
    std: float  # population std

    def formatted(self) -> str:
        return f"{self.mean:.4f}±{self.std:.2f}"


def dice_summary(values) -> DiceSummary:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValidationError("dice_summary needs at least one value")
    return DiceSummary(mean=float(values.mean()), std=float(values.std(ddof=0)))


# ---------------------------------------------------------------------------
# prediction files and reports


def read_predictions(path: Path | str) -> list[tuple[str, int, float, float]]:
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["id", "label", "p0", "p1"]:
            raise ValidationError(f"predictions file must have id,label,p0,p1 header: {path}")
        for row in reader:
            if not row:
                continue
            rows.append((row[0], int(row[1]), float(row[2]), float(row[3])))
    if not rows:
        raise ValidationError(f"predictions file is empty: {path}")
    return rows


def labels_from_manifest(manifest: Path | str) -> dict[str, int]:
    from .data import read_manifest

    out = {}
    for rel, label in read_manifest(Path(manifest)):
        if label is not None:
            out[Path(rel).stem] = label
    return out


def evaluate_predictions(
    preds: list[tuple[str, int, float, float]], labels: dict[str, int]
) -> tuple[MetricsReport, list[tuple[float, float, float]]]:
    """Join predictions to true labels and compute the full report."""
    true, pred, scores = [], [], []
    for img_id, label, _p0, p1 in preds:
        if img_id not in labels:
            raise ValidationError(f"prediction id {img_id!r} has no label in the manifest")
        true.append(labels[img_id])
        pred.append(label)
        scores.append(p1)
    report = confusion_metrics(true, pred)
    curve: list[tuple[float, float, float]] = []
    if len(set(true)) == 2:
        report.auc, curve = auc_roc(scores, true)
    else:
        report.flags.append("auc_undefined_single_class")
    return report, curve


def write_metrics_json(report: MetricsReport, path: Path | str) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_roc_csv(curve: list[tuple[float, float, float]], path: Path | str) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr", "threshold"])
        for fpr, tpr, thr in curve:
            writer.writerow([f"{fpr:.6f}", f"{tpr:.6f}", thr])
    return path


METRIC_COLUMNS = ("accuracy", "precision", "sensitivity", "specificity", "f_score")


def ablation_report(
    runs: list[tuple[str, Path | str]], labels: dict[str, int]
) -> list[tuple[str, MetricsReport]]:
    """One metrics row per run, in the order given."""
    rows = []
    for name, preds_path in runs:
        preds_path = Path(preds_path)
        if not preds_path.exists():
            raise ValidationError(f"run {name!r}: predictions file not found: {preds_path}")
        report, _ = evaluate_predictions(read_predictions(preds_path), labels)
        rows.append((name, report))
    return rows


def format_ablation_markdown(rows: list[tuple[str, MetricsReport]]) -> str:
    header = "| Variant | Accuracy | Precision | Sensitivity | Specificity | F-Score |"
    sep = "|---" * 6 + "|"
    lines = [header, sep]
    for name, report in rows:
        cells = " | ".join(f"{getattr(report, m):.2f}" for m in METRIC_COLUMNS)
        lines.append(f"| {name} | {cells} |")
    return "\n".join(lines) + "\n"
