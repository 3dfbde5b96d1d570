"""Detection matching, average precision, and image-level classification metrics.

Box matching is greedy one-to-one in score order (ties on IoU go to the
earliest ground-truth box) and requires IoU at or above the threshold --
note the asymmetry with fusion, where suppression requires strictly more
than the threshold. AP uses 101-point interpolation over the precision
envelope, and AP@[0.5:0.95] averages thresholds 0.50, 0.55, ..., 0.95.
All classification metrics come from an integer confusion matrix over
image-level labels, with the fracture class positive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .geometry import Box, iou
from .interchange import LABEL_FRACTURE, GroundTruth
from .voting import ImageDecision, decide_image

AP_RANGE_THRESHOLDS = tuple(k / 100.0 for k in range(50, 100, 5))
RECALL_SAMPLES = tuple(k / 100.0 for k in range(101))


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


@dataclass(frozen=True)
class EvalReport:
    """Full metric suite for one prediction source.

    ``ap50``/``ap_50_95`` are None when the evaluation ran from image-level
    decisions only (no boxes to match). ``degenerate`` lists the zero-
    denominator conventions that fired, so a perfect-looking number can be
    traced to its convention instead of silently misread.
    """

    accuracy: float
    precision: float
    recall: float
    f1: float
    sensitivity: float
    specificity: float
    confusion: ConfusionMatrix
    ap50: float | None = None
    ap_50_95: float | None = None
    ap_by_threshold: dict[float, float] = field(default_factory=dict)
    per_image: tuple[tuple[str, str, str], ...] = ()
    degenerate: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "accuracy_percent": round(self.accuracy * 100.0, 2),
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "ap50": self.ap50,
            "ap_50_95": self.ap_50_95,
            "ap_by_threshold": {f"{t:.2f}": v for t, v in self.ap_by_threshold.items()},
            "confusion": self.confusion.to_dict(),
            "degenerate_conventions": list(self.degenerate),
            "per_image": [list(row) for row in self.per_image],
        }


def match_detections(
    preds: Sequence, gt_boxes: Sequence[Box], iou_threshold: float
) -> list[tuple[int, int | None]]:
    """Greedy one-to-one matching of predictions to ground-truth boxes.

    Returns (prediction index, matched gt index or None) pairs in descending
    score order; indices refer to the input sequences. Each ground truth is
    matched at most once.
    """
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    taken: set[int] = set()
    out: list[tuple[int, int | None]] = []
    for i in order:
        best_j: int | None = None
        best_v = 0.0
        for j, g in enumerate(gt_boxes):
            if j in taken:
                continue
            v = iou(preds[i].box, g)
            if v >= iou_threshold and (best_j is None or v > best_v):
                best_j, best_v = j, v
        if best_j is not None:
            taken.add(best_j)
        out.append((i, best_j))
    return out


def average_precision(
    preds_by_image: Mapping[str, Sequence],
    gts_by_image: Mapping[str, Sequence[Box]],
    iou_threshold: float,
) -> float:
    """101-point interpolated AP over the whole corpus at one IoU threshold.

    Raises if the corpus has no ground-truth boxes (AP is undefined there);
    returns 0.0 for an empty prediction list against a non-empty ground truth.
    """
    total_gt = sum(len(g) for g in gts_by_image.values())
    if total_gt == 0:
        raise ValueError("average precision undefined: corpus has no ground-truth boxes")

    entries: list[tuple[float, int, int, bool]] = []
    for pos, (image_id, preds) in enumerate(preds_by_image.items()):
        matches = match_detections(preds, gts_by_image.get(image_id, ()), iou_threshold)
        for rank, (pred_idx, gt_idx) in enumerate(matches):
            entries.append((preds[pred_idx].score, pos, rank, gt_idx is not None))
    if not entries:
        return 0.0
    entries.sort(key=lambda t: (-t[0], t[1], t[2]))

    tp = np.array([e[3] for e in entries], dtype=np.float64)
    cum_tp = np.cumsum(tp)
    ranks = np.arange(1, len(entries) + 1, dtype=np.float64)
    recall = cum_tp / total_gt
    precision = cum_tp / ranks
    envelope = np.maximum.accumulate(precision[::-1])[::-1]

    idx = np.searchsorted(recall, np.array(RECALL_SAMPLES), side="left")
    total = 0.0
    for i in idx:
        if i < len(envelope):
            total += float(envelope[i])
    return total / len(RECALL_SAMPLES)


def ap_at_thresholds(
    preds_by_image: Mapping[str, Sequence],
    gts_by_image: Mapping[str, Sequence[Box]],
    thresholds: Sequence[float],
) -> dict[float, float]:
    return {t: average_precision(preds_by_image, gts_by_image, t) for t in thresholds}


def _rate(numerator: int, denominator: int, convention: str, fired: list[str]) -> float:
    if denominator == 0:
        fired.append(convention)
        return 1.0
    return numerator / denominator


def classification_report(
    decisions: Sequence[ImageDecision],
    ground_truth: Mapping[str, GroundTruth],
    ap_by_threshold: Mapping[float, float] | None = None,
) -> EvalReport:
    """Image-level confusion matrix and derived metrics, positive class fracture."""
    if not decisions:
        raise ValueError("classification report requires at least one decision")
    seen: set[str] = set()
    tp = fp = fn = tn = 0
    per_image = []
    for d in decisions:
        gt = ground_truth.get(d.image_id)
        if gt is None:
            raise ValueError(f"decision for unknown image_id {d.image_id!r}")
        if d.image_id in seen:
            raise ValueError(f"duplicate decision for image {d.image_id!r}")
        seen.add(d.image_id)
        actual_positive = gt.image_label == LABEL_FRACTURE
        if d.is_fracture and actual_positive:
            tp += 1
        elif d.is_fracture:
            fp += 1
        elif actual_positive:
            fn += 1
        else:
            tn += 1
        per_image.append((d.image_id, d.label, gt.image_label))

    fired: list[str] = []
    confusion = ConfusionMatrix(tp, fp, fn, tn)
    accuracy = (tp + tn) / confusion.total
    precision = _rate(tp, tp + fp, "precision=1.0 with no predicted positives", fired)
    recall = _rate(tp, tp + fn, "recall=1.0 with no actual positives", fired)
    specificity = _rate(tn, tn + fp, "specificity=1.0 with no actual negatives", fired)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0

    ap_map = dict(ap_by_threshold) if ap_by_threshold else {}
    return EvalReport(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        sensitivity=recall,
        specificity=specificity,
        confusion=confusion,
        ap50=_extract_ap(ap_map, 50),
        ap_50_95=_mean_over_range(ap_map),
        ap_by_threshold=ap_map,
        per_image=tuple(per_image),
        degenerate=tuple(fired),
    )


def _extract_ap(ap_map: Mapping[float, float], centi: int) -> float | None:
    for t, v in ap_map.items():
        if round(t * 100) == centi:
            return v
    return None


def _mean_over_range(ap_map: Mapping[float, float]) -> float | None:
    values = []
    for t in AP_RANGE_THRESHOLDS:
        v = _extract_ap(ap_map, round(t * 100))
        if v is None:
            return None
        values.append(v)
    return sum(values) / len(values)


def evaluate_predictions(
    preds_by_image: Mapping[str, Sequence],
    ground_truth: Mapping[str, GroundTruth],
    decision_threshold: float = 0.5,
    iou_thresholds: Sequence[float] = AP_RANGE_THRESHOLDS,
) -> EvalReport:
    """Full pipeline: per-image decisions at the threshold, classification
    metrics over every ground-truth image, and AP at the given IoU thresholds.

    Images absent from ``preds_by_image`` count as empty prediction sets.
    """
    unknown = [i for i in preds_by_image if i not in ground_truth]
    if unknown:
        raise ValueError(f"predictions for unknown image_id {unknown[0]!r}")
    decisions = [
        decide_image(image_id, preds_by_image.get(image_id, ()), decision_threshold)
        for image_id in ground_truth
    ]
    gts_by_image = {image_id: gt.boxes for image_id, gt in ground_truth.items()}
    ap_map = ap_at_thresholds(preds_by_image, gts_by_image, iou_thresholds)
    return classification_report(decisions, ground_truth, ap_map)


TABLE_COLUMNS = ("Accuracy (%)", "Precision", "Recall", "F1-Score", "AP@0.5", "AP@[0.5:0.95]")


def render_table(rows: Sequence[tuple[str, EvalReport]], name_header: str = "Model") -> str:
    """Aligned plain-text comparison table, one row per prediction source."""

    def fmt(value: float | None, percent: bool = False) -> str:
        if value is None:
            return "-"
        return f"{value * 100.0:.2f}" if percent else f"{value:.4f}"

    body = [
        (
            name,
            fmt(r.accuracy, percent=True),
            fmt(r.precision),
            fmt(r.recall),
            fmt(r.f1),
            fmt(r.ap50),
            fmt(r.ap_50_95),
        )
        for name, r in rows
    ]
    header = (name_header,) + TABLE_COLUMNS
    widths = [max(len(header[c]), *(len(row[c]) for row in body)) for c in range(len(header))]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    for row in body:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def report_to_json(report: EvalReport, name: str | None = None) -> str:
    payload = report.to_dict()
    if name is not None:
        payload = {"name": name, **payload}
    return json.dumps(payload, indent=2) + "\n"
