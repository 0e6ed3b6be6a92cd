"""Segmentation and classification evaluation metrics.

PartIoU pools true/false positives per class across all clouds (the
common benchmark convention) and averages over classes whose union is
non-empty; a per-building-average variant is available behind a flag.
ShapeIoU averages each building's mean class IoU. Points labeled with the
ignore class never contribute anywhere. All values are percentages.
"""

import csv
from dataclasses import dataclass

import numpy as np


def overall_accuracy(pred_classes, true_classes) -> float:
    """Percentage of exact matches."""
    pred = np.asarray(pred_classes)
    true = np.asarray(true_classes)
    if pred.shape != true.shape or pred.size == 0:
        raise ValueError("predictions and truths must be equal-length and non-empty")
    return 100.0 * float((pred == true).sum()) / pred.size


def _confusion(preds, truths, num_classes: int, ignore_index):
    """Stacked (tp, fp, fn) counts per class over one or many clouds."""
    tp = np.zeros(num_classes, dtype=np.int64)
    fp = np.zeros(num_classes, dtype=np.int64)
    fn = np.zeros(num_classes, dtype=np.int64)
    p = np.asarray(preds).ravel()
    t = np.asarray(truths).ravel()
    if p.shape != t.shape:
        raise ValueError("prediction/truth length mismatch")
    if ignore_index is not None:
        keep = t != ignore_index
        p, t = p[keep], t[keep]
    correct = p == t
    tp += np.bincount(t[correct], minlength=num_classes)[:num_classes]
    fn += np.bincount(t[~correct], minlength=num_classes)[:num_classes]
    wrong_preds = p[~correct]
    in_range = wrong_preds[(wrong_preds >= 0) & (wrong_preds < num_classes)]
    fp += np.bincount(in_range, minlength=num_classes)[:num_classes]
    return tp, fp, fn


def _iou_table(tp, fp, fn, ignore_index=None):
    union = tp + fp + fn
    out = {}
    for c in np.flatnonzero(union):
        if ignore_index is not None and c == ignore_index:
            continue  # the unspecified class is never scored
        out[int(c)] = 100.0 * tp[c] / union[c]
    return out


def part_iou(preds, truths, num_classes: int, ignore_index=None, per_building=False):
    """Per-class IoU and their mean over a collection of clouds.

    ``preds``/``truths`` are parallel sequences of per-point label arrays.
    Classes whose union is empty are excluded from the mean. With
    ``per_building`` the per-class IoU is the mean of that class's
    per-building IoUs instead of the pooled count ratio.
    """
    if isinstance(preds, np.ndarray) and preds.ndim == 1:
        preds, truths = [preds], [truths]
    preds, truths = list(preds), list(truths)
    if not preds:
        raise ValueError("no clouds given")
    if per_building:
        sums = np.zeros(num_classes)
        seen = np.zeros(num_classes, dtype=np.int64)
        for p, t in zip(preds, truths):
            table = _iou_table(*_confusion(p, t, num_classes, ignore_index), ignore_index=ignore_index)
            for c, v in table.items():
                sums[c] += v
                seen[c] += 1
        per_class = {int(c): sums[c] / seen[c] for c in np.flatnonzero(seen)}
    else:
        tp = np.zeros(num_classes, dtype=np.int64)
        fp = np.zeros(num_classes, dtype=np.int64)
        fn = np.zeros(num_classes, dtype=np.int64)
        for p, t in zip(preds, truths):
            a, b, c = _confusion(p, t, num_classes, ignore_index)
            tp += a
            fp += b
            fn += c
        if not (tp + fp + fn).any():
            raise ValueError("no non-ignored points")
        per_class = _iou_table(tp, fp, fn, ignore_index=ignore_index)
    if not per_class:
        raise ValueError("no non-ignored points")
    return per_class, float(np.mean(list(per_class.values())))


def shape_iou(preds, truths, num_classes: int, ignore_index=None) -> float:
    """Mean over clouds of the per-cloud mean class IoU."""
    preds, truths = list(preds), list(truths)
    values = []
    for p, t in zip(preds, truths):
        table = _iou_table(*_confusion(p, t, num_classes, ignore_index), ignore_index=ignore_index)
        if table:
            values.append(float(np.mean(list(table.values()))))
    if not values:
        raise ValueError("no cloud with non-ignored points")
    return float(np.mean(values))


def harmonic_mean(accuracy: float, piou: float) -> float:
    """2 / (1/accuracy + 1/PartIoU); 0 when either input is 0."""
    if accuracy < 0 or piou < 0:
        raise ValueError("harmonic_mean inputs must be nonnegative")
    if accuracy == 0 or piou == 0:
        return 0.0
    return 2.0 / (1.0 / accuracy + 1.0 / piou)


@dataclass(frozen=True)
class EvalReport:
    """Metric bundle for one evaluation pass; absent metrics are None."""

    per_class_iou: dict | None = None
    part_iou: float | None = None
    shape_iou: float | None = None
    overall_accuracy: float | None = None
    harmonic_mean: float | None = None

    def selection_metric(self, task: str) -> float:
        if task == "classification":
            return self.overall_accuracy
        if task == "segmentation":
            return self.part_iou
        if task == "multitask":
            return self.harmonic_mean
        raise ValueError(f"no selection metric for task {task!r}")


def save_report(report: EvalReport, path, class_names=None) -> None:
    """Flat key=value text file plus a per-class CSV next to it."""
    path = str(path)
    with open(path, "w", encoding="utf-8") as fh:
        for key in ("overall_accuracy", "part_iou", "shape_iou", "harmonic_mean"):
            value = getattr(report, key)
            if value is not None:
                fh.write(f"{key}={value:.4f}\n")
    if report.per_class_iou is not None:
        csv_path = path + ".per_class.csv"
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "iou"])
            for c in sorted(report.per_class_iou):
                name = class_names[c] if class_names else str(c)
                writer.writerow([name, f"{report.per_class_iou[c]:.4f}"])
