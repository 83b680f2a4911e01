"""Training objective: frame-level, video-level, and actionness terms.

All functions build scalar Tensors on the caller's tape so gradients
flow back to the model parameters. The composition is

    total = frame_labeled + frame_background / Nc
            + alpha * video + beta * actionness

where the background term is averaged over the actually mined count,
keeping it a proper mean even when candidates run short.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class LossBreakdown:
    frame_labeled: float
    frame_background: float
    frame_total: float
    actionness: float
    video: float
    total: float

    LOG_HEADER = "iter,frame_l,frame_b,actionness,video,total"

    def log_row(self, iteration: int) -> str:
        return (f"{iteration},{self.frame_labeled:.10g},{self.frame_background:.10g},"
                f"{self.actionness:.10g},{self.video:.10g},{self.total:.10g}")


def _zero() -> Tensor:
    return Tensor(0.0)


def _check_unmasked(mask: np.ndarray, pairs, what: str) -> None:
    bad = [(v, f) for v, f in pairs if not mask[v, f]]
    if bad:
        raise ValueError(f"{what} include padded frames: {bad[:5]}")


def frame_loss_labeled(C: Tensor, mask: np.ndarray,
                       action_frames) -> Tensor:
    """Mean cross-entropy of labeled (anchor + expanded) frames.

    action_frames: (video_index, frame, label) triples. Empty input is a
    degenerate batch; it warns and contributes zero.
    """
    triples = list(action_frames)
    if not triples:
        warnings.warn("frame_loss_labeled: no labeled frames in batch")
        return _zero()
    vids = np.array([v for v, _, _ in triples])
    frames = np.array([f for _, f, _ in triples])
    labels = np.array([y for _, _, y in triples])
    _check_unmasked(mask, zip(vids, frames), "labeled frames")
    logp = ad.log_softmax(ad.take_frames(C, vids, frames))
    picked = ad.take_classes(logp, labels)
    return -ad.mean_all(picked)


def frame_loss_background(C: Tensor, mask: np.ndarray,
                          background_frames) -> Tensor:
    """Mean cross-entropy of mined frames against the background class."""
    pairs = list(background_frames)
    if not pairs:
        return _zero()
    vids = np.array([v for v, _ in pairs])
    frames = np.array([f for _, f in pairs])
    _check_unmasked(mask, pairs, "background frames")
    logp = ad.log_softmax(ad.take_frames(C, vids, frames))
    picked = ad.take_classes(logp, np.zeros(len(pairs), dtype=np.intp))
    return -ad.mean_all(picked)


def frame_loss_total(labeled: Tensor, background: Tensor, num_classes: int) -> Tensor:
    """labeled + background / Nc; the divisor rescales the negatives."""
    if num_classes < 1:
        raise ValueError(f"num_classes must be >= 1, got {num_classes}")
    return labeled + background * (1.0 / num_classes)


def actionness_loss(A: Tensor, mask: np.ndarray, action_frames,
                    background_frames) -> Tensor:
    """Binary logistic loss on the class-agnostic action score.

    Labeled frames are positives, mined background frames negatives;
    each side is averaged over its own count and a missing side
    contributes zero.
    """
    total = None
    triples = list(action_frames)
    if triples:
        vids = np.array([v for v, _, _ in triples])
        frames = np.array([f for _, f, _ in triples])
        _check_unmasked(mask, zip(vids, frames), "actionness positives")
        pos = -ad.mean_all(ad.log_sigmoid(ad.take_frames(A, vids, frames)))
        total = pos
    pairs = list(background_frames)
    if pairs:
        vids = np.array([v for v, _ in pairs])
        frames = np.array([f for _, f in pairs])
        _check_unmasked(mask, pairs, "actionness negatives")
        # log(1 - sigmoid(a)) == log(sigmoid(-a))
        neg = -ad.mean_all(ad.log_sigmoid(-ad.take_frames(A, vids, frames)))
        total = neg if total is None else total + neg
    return _zero() if total is None else total


def pooled_video_logits(C: Tensor, mask: np.ndarray, video: int,
                        topk_ratio: int) -> Tensor:
    """Per-class top-k mean over one video's unpadded frames -> [Nc+1]."""
    length = int(mask[video].sum())
    k = max(1, length // topk_ratio)
    return ad.topk_mean_columns(ad.time_slice(C, video, length), k)


def video_loss(C: Tensor, mask: np.ndarray, anchors, num_classes: int,
               topk_ratio: int = 8) -> Tensor:
    """Multi-label video classification from pooled frame scores.

    Each video's class scores pool to a vector by top-k mean with
    k = max(1, floor(length / topk_ratio)). The target q is the label
    histogram of that video's annotated frames, normalized, with zero
    background mass; the loss is the q-weighted cross-entropy of the
    pooled softmax over all Nc+1 classes, averaged over videos that have
    at least one annotation.
    """
    per_video_labels: dict[int, list[int]] = {}
    for v, _, y in anchors:
        per_video_labels.setdefault(v, []).append(y)
    n_videos = mask.shape[0]
    contributions = []
    for v in range(n_videos):
        labels = per_video_labels.get(v)
        if not labels:
            warnings.warn(f"video index {v} has no annotations; skipped in video loss")
            continue
        q = np.zeros(num_classes + 1)
        for y in labels:
            if not 1 <= y <= num_classes:
                raise ValueError(f"annotation class {y} outside 1..{num_classes}")
            q[y] += 1.0
        q /= q.sum()
        logp = ad.log_softmax(pooled_video_logits(C, mask, v, topk_ratio))
        contributions.append(-ad.weighted_sum(logp, q))
    if not contributions:
        warnings.warn("video_loss: no annotated videos in batch")
        return _zero()
    total = contributions[0]
    for c in contributions[1:]:
        total = total + c
    return total * (1.0 / len(contributions))


def total_loss(frame_labeled: Tensor, frame_background: Tensor,
               actionness: Tensor, video: Tensor, num_classes: int,
               alpha: float, beta: float) -> tuple[Tensor, LossBreakdown]:
    """Combine the four terms; returns the scalar and its float breakdown."""
    if alpha < 0 or beta < 0:
        raise ValueError(f"loss weights must be >= 0, got alpha={alpha} beta={beta}")
    frame = frame_loss_total(frame_labeled, frame_background, num_classes)
    total = frame + video * alpha + actionness * beta
    breakdown = LossBreakdown(
        frame_labeled=float(frame_labeled.data),
        frame_background=float(frame_background.data),
        frame_total=float(frame.data),
        actionness=float(actionness.data),
        video=float(video.data),
        total=float(total.data),
    )
    return total, breakdown
