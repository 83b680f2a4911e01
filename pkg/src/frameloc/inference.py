"""Score maps -> video labels, action segments, single-frame detections.

The frame-level decision score for class c is

    s_c[t] = softmax(C[t])[c] + sigmoid(A[t])

two probability-scale terms, so the segment threshold lives on a fixed
[0, 2] scale regardless of logit magnitudes. A raw-logit mode (C + A
directly) is kept behind score_mode for comparison. Segments are
maximal runs of frames strictly above the threshold.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .autodiff import stable_sigmoid, stable_softmax

SCORE_MODES = ("probability", "logit")


@dataclass(frozen=True)
class Segment:
    video_id: str
    start: int  # inclusive frame index
    end: int    # inclusive frame index
    label: int
    confidence: float = 1.0

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"segment start {self.start} after end {self.end}")
        if self.start < 0:
            raise ValueError(f"segment start must be >= 0, got {self.start}")
        if self.label < 1:
            raise ValueError(f"segment class must be >= 1, got {self.label}")

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class FrameDetection:
    video_id: str
    frame: int
    label: int
    confidence: float


def pooled_scores(C_video: np.ndarray, topk_ratio: int) -> np.ndarray:
    """Top-k mean per class column; k = max(1, floor(T / topk_ratio))."""
    t = C_video.shape[0]
    k = max(1, t // topk_ratio)
    idx = np.argsort(-C_video, axis=0, kind="stable")[:k]
    cols = np.broadcast_to(np.arange(C_video.shape[1]), idx.shape)
    return C_video[idx, cols].mean(axis=0)


def predict_video_labels(C: np.ndarray, mask: np.ndarray, video_threshold: float,
                         topk_ratio: int = 8) -> list[set[int]]:
    """Classes whose pooled softmax probability reaches the threshold.

    When no action class qualifies, falls back to the single most
    probable action class (lowest index on ties), so every video gets
    at least one label for segment extraction.
    """
    out = []
    for v in range(C.shape[0]):
        length = int(mask[v].sum())
        probs = stable_softmax(pooled_scores(C[v, :length], topk_ratio))
        chosen = {int(j) for j in range(1, C.shape[2]) if probs[j] >= video_threshold}
        if not chosen:
            chosen = {1 + int(np.argmax(probs[1:]))}
        out.append(chosen)
    return out


def video_class_probabilities(C: np.ndarray, mask: np.ndarray,
                              topk_ratio: int = 8) -> np.ndarray:
    """Pooled softmax over all classes per video -> [N, Nc+1]."""
    rows = []
    for v in range(C.shape[0]):
        length = int(mask[v].sum())
        rows.append(stable_softmax(pooled_scores(C[v, :length], topk_ratio)))
    return np.stack(rows)


def _runs_above(values: np.ndarray, threshold: float, gap_fill: int) -> list[tuple[int, int]]:
    above = values > threshold
    runs = []
    start = None
    for t, flag in enumerate(above):
        if flag and start is None:
            start = t
        elif not flag and start is not None:
            runs.append((start, t - 1))
            start = None
    if start is not None:
        runs.append((start, len(above) - 1))
    if gap_fill > 0 and len(runs) > 1:
        merged = [runs[0]]
        for s, e in runs[1:]:
            ps, pe = merged[-1]
            if s - pe - 1 <= gap_fill:
                merged[-1] = (ps, e)
            else:
                merged.append((s, e))
        runs = merged
    return runs


def extract_segments(C: np.ndarray, A: np.ndarray, mask: np.ndarray,
                     video_ids: list[str], video_labels: list[set[int]],
                     threshold: float, score_mode: str = "probability",
                     gap_fill: int = 0) -> list[Segment]:
    """Maximal runs with combined score strictly above the threshold.

    One pass per (video, predicted class). Segment confidence is the
    run's best class score plus the actionness term at that same frame.
    gap_fill > 0 merges runs separated by at most that many low frames.
    """
    if score_mode not in SCORE_MODES:
        raise ValueError(f"score_mode must be one of {SCORE_MODES}, got {score_mode!r}")
    segments = []
    for v, vid in enumerate(video_ids):
        length = int(mask[v].sum())
        if score_mode == "probability":
            class_scores = stable_softmax(C[v, :length], axis=-1)
            act = stable_sigmoid(A[v, :length])
        else:
            class_scores = C[v, :length]
            act = A[v, :length]
        for c in sorted(video_labels[v]):
            s = class_scores[:, c] + act
            for start, end in _runs_above(s, threshold, gap_fill):
                best = start + int(np.argmax(class_scores[start:end + 1, c]))
                conf = float(class_scores[best, c] + act[best])
                segments.append(Segment(video_id=vid, start=start, end=end,
                                        label=c, confidence=conf))
    return segments


def localize_single_frames(segments: list[Segment], C: np.ndarray, A: np.ndarray,
                           mask: np.ndarray, video_ids: list[str],
                           score_mode: str = "probability") -> list[FrameDetection]:
    """One detection per segment at the peak of the combined score.

    Ties go to the earliest frame. Detection confidence is inherited
    from the segment.
    """
    if score_mode not in SCORE_MODES:
        raise ValueError(f"score_mode must be one of {SCORE_MODES}, got {score_mode!r}")
    index = {vid: i for i, vid in enumerate(video_ids)}
    out = []
    for seg in segments:
        v = index[seg.video_id]
        sl = slice(seg.start, seg.end + 1)
        if score_mode == "probability":
            class_scores = stable_softmax(C[v, sl], axis=-1)[:, seg.label]
            act = stable_sigmoid(A[v, sl])
        else:
            class_scores = C[v, sl, seg.label]
            act = A[v, sl]
        combined = class_scores + act
        frame = seg.start + int(np.argmax(combined))
        out.append(FrameDetection(video_id=seg.video_id, frame=frame,
                                  label=seg.label, confidence=seg.confidence))
    return out


def write_segments_csv(segments: list[Segment], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["video_id", "class", "start", "end", "confidence"])
        for s in segments:
            writer.writerow([s.video_id, s.label, s.start, s.end, f"{s.confidence:.10g}"])


def write_detections_csv(detections: list[FrameDetection], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["video_id", "class", "frame", "confidence"])
        for d in detections:
            writer.writerow([d.video_id, d.label, d.frame, f"{d.confidence:.10g}"])
