"""Detection and classification scoring.

All average precisions share one protocol: rank predictions by
confidence (ties by video_id then position, so input order never
matters), greedily match each against unmatched same-video ground truth,
and integrate the un-interpolated precision-recall staircase:

    AP = sum over true-positive ranks r of  precision(r) / n_ground_truth

An 11-point interpolated variant is available for comparison with older
toolkits. Classes absent from the ground truth are skipped by every
mean.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import replace

import numpy as np

from .inference import FrameDetection, Segment

IOU_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7)
AGNOSTIC_GRID = (0.3, 0.5, 0.7)


def temporal_iou(a: Segment, b: Segment) -> float:
    """Intersection over union of inclusive frame intervals."""
    inter = min(a.end, b.end) - max(a.start, b.start) + 1
    if inter <= 0:
        return 0.0
    union = a.length + b.length - inter
    return inter / union


def _ap_from_flags(flags: list[bool], n_gt: int, interpolated: bool) -> float:
    if n_gt < 1:
        raise ValueError("average precision needs at least one ground-truth item")
    if not flags:
        return 0.0
    tp = 0
    precisions = []
    recalls = []
    area = 0.0
    for rank, is_tp in enumerate(flags, start=1):
        if is_tp:
            tp += 1
            area += (tp / rank) / n_gt
        precisions.append(tp / rank)
        recalls.append(tp / n_gt)
    if not interpolated:
        return area
    points = []
    for r in np.linspace(0.0, 1.0, 11):
        candidates = [p for p, rec in zip(precisions, recalls) if rec >= r - 1e-12]
        points.append(max(candidates) if candidates else 0.0)
    return float(np.mean(points))


def _sorted_predictions(items, position):
    return sorted(items, key=lambda x: (-x.confidence, x.video_id, position(x)))


def segment_ap(predictions: list[Segment], ground_truth: list[Segment],
               label: int, iou_threshold: float, interpolated: bool = False) -> float:
    """AP for one class at one IoU threshold.

    Each prediction claims the unmatched same-video ground truth with
    the highest IoU; it is a true positive when that IoU reaches the
    threshold. Ground truth can be claimed once.
    """
    gts = sorted((g for g in ground_truth if g.label == label),
                 key=lambda g: (g.video_id, g.start, g.end))
    if not gts:
        raise ValueError(f"no ground-truth segments with class {label}")
    preds = _sorted_predictions((p for p in predictions if p.label == label),
                                lambda p: p.start)
    matched = [False] * len(gts)
    flags = []
    for p in preds:
        best_iou = -1.0
        best_j = -1
        for j, g in enumerate(gts):
            if matched[j] or g.video_id != p.video_id:
                continue
            iou = temporal_iou(p, g)
            if iou > best_iou:
                best_iou = iou
                best_j = j
        if best_j >= 0 and best_iou >= iou_threshold:
            matched[best_j] = True
            flags.append(True)
        else:
            flags.append(False)
    return _ap_from_flags(flags, len(gts), interpolated)


def segment_map(predictions: list[Segment], ground_truth: list[Segment],
                iou_threshold: float, interpolated: bool = False) -> float:
    """Mean segment AP over the classes present in the ground truth."""
    classes = sorted({g.label for g in ground_truth})
    if not classes:
        warnings.warn("segment_map: empty ground truth")
        return 0.0
    aps = [segment_ap(predictions, ground_truth, c, iou_threshold, interpolated)
           for c in classes]
    return float(np.mean(aps))


def map_at_hit(detections: list[FrameDetection], ground_truth: list[Segment],
               interpolated: bool = False) -> float:
    """Single-frame localization quality.

    A detection is correct when its frame lies inside an unmatched
    ground-truth segment of the same class; among several containing
    segments the earliest (by start, then end) is claimed.
    """
    classes = sorted({g.label for g in ground_truth})
    if not classes:
        warnings.warn("map_at_hit: empty ground truth")
        return 0.0
    aps = []
    for c in classes:
        gts = sorted((g for g in ground_truth if g.label == c),
                     key=lambda g: (g.video_id, g.start, g.end))
        dets = _sorted_predictions((d for d in detections if d.label == c),
                                   lambda d: d.frame)
        matched = [False] * len(gts)
        flags = []
        for d in dets:
            hit = -1
            for j, g in enumerate(gts):
                if matched[j] or g.video_id != d.video_id:
                    continue
                if g.start <= d.frame <= g.end:
                    hit = j
                    break
            if hit >= 0:
                matched[hit] = True
                flags.append(True)
            else:
                flags.append(False)
        aps.append(_ap_from_flags(flags, len(gts), interpolated))
    return float(np.mean(aps))


def class_agnostic_ap(predictions: list[Segment], ground_truth: list[Segment],
                      iou_threshold: float, interpolated: bool = False) -> float:
    """Localization quality with class labels collapsed to one."""
    if not ground_truth:
        warnings.warn("class_agnostic_ap: empty ground truth")
        return 0.0
    preds = [replace(p, label=1) for p in predictions]
    gts = [replace(g, label=1) for g in ground_truth]
    return segment_ap(preds, gts, 1, iou_threshold, interpolated)


def video_classification_map(probs: np.ndarray, video_ids: list[str],
                             true_labels: list[set[int]],
                             interpolated: bool = False) -> float:
    """Mean AP of ranking videos by per-class probability.

    probs: [N, Nc+1] pooled class probabilities; positives for class c
    are videos whose ground truth contains c. Classes with no positive
    video are skipped.
    """
    n, c_total = probs.shape
    aps = []
    for c in range(1, c_total):
        positives = [i for i in range(n) if c in true_labels[i]]
        if not positives:
            continue
        order = sorted(range(n), key=lambda i: (-probs[i, c], video_ids[i]))
        flags = [c in true_labels[i] for i in order]
        aps.append(_ap_from_flags(flags, len(positives), interpolated))
    if not aps:
        warnings.warn("video_classification_map: no class has a positive video")
        return 0.0
    return float(np.mean(aps))


def compute_report(segments: list[Segment], detections: list[FrameDetection],
                   gt_segments: list[Segment], video_probs: np.ndarray,
                   video_ids: list[str], gt_video_labels: list[set[int]],
                   interpolated: bool = False) -> dict[str, float]:
    """The full metric table, in its fixed row order."""
    report: dict[str, float] = {}
    per_iou = []
    for thr in IOU_GRID:
        value = segment_map(segments, gt_segments, thr, interpolated)
        per_iou.append(value)
        report[f"mAP@{thr:.1f}"] = value
    report["AVG(0.1:0.7)"] = float(np.mean(per_iou))
    report["AVG(0.1:0.5)"] = float(np.mean(per_iou[:5]))
    report["mAP@hit"] = map_at_hit(detections, gt_segments, interpolated)
    for thr in AGNOSTIC_GRID:
        report[f"AP-agnostic@{thr:.1f}"] = class_agnostic_ap(
            segments, gt_segments, thr, interpolated)
    report["video-mAP"] = video_classification_map(
        video_probs, video_ids, gt_video_labels, interpolated)
    return report


def write_report_csv(report: dict[str, float], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "value"])
        for name, value in report.items():
            writer.writerow([name, f"{value:.6f}"])


def read_report_csv(path) -> dict[str, float]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["metric", "value"]:
            raise ValueError(f"{path}: expected header 'metric,value', got {header}")
        return {row[0]: float(row[1]) for row in reader if row}
