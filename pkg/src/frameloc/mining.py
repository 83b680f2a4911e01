"""Pseudo-label mining and single-frame annotation simulation.

Training supervision starts from one labeled frame per action instance.
Two miners grow that signal every iteration:

* expand_anchor walks outward from an annotated frame and keeps
  neighbors whose local prediction agrees and whose class score stays
  within keep_ratio of the anchor's.
* mine_background ranks every unlabeled, unpadded frame in the batch by
  its background-class score and takes the top slice as negatives.

Annotation simulators turn ground-truth segments into single-frame
labels under three sampling styles (uniform, mid-peaked gaussian, and a
beta-distributed approximation of human clicking behavior).

Score matrices passed to the miners should be nonnegative and
comparable across frames; class probabilities fit, raw logits do not
(the keep_ratio test is meaningless for negative scores).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

STRATEGIES = ("uniform", "gaussian_mid", "human_like")


@dataclass(frozen=True)
class FrameAnnotation:
    """One annotated action frame. Class 0 is reserved for background."""

    video_id: str
    frame: int
    label: int

    def __post_init__(self):
        if self.frame < 0:
            raise ValueError(f"annotation frame must be >= 0, got {self.frame}")
        if self.label < 1:
            raise ValueError(f"annotation class must be >= 1, got {self.label}")


@dataclass
class PseudoLabels:
    """Frame-level training pool for one batch.

    action_frames: (video_index, frame, label, origin) with origin
    "anchor" or "expanded"; background_frames: (video_index, frame).
    The two lists are disjoint by construction and deterministic in
    order. K (the labeled-frame count) is len(action_frames).
    """

    action_frames: list[tuple[int, int, int, str]]
    background_frames: list[tuple[int, int]]

    def action_triples(self) -> list[tuple[int, int, int]]:
        return [(v, f, y) for v, f, y, _ in self.action_frames]

    def anchor_triples(self) -> list[tuple[int, int, int]]:
        return [(v, f, y) for v, f, y, o in self.action_frames if o == "anchor"]


def expand_anchor(scores: np.ndarray, frame: int, label: int, radius: int,
                  keep_ratio: float, stop_on_failure: bool = True) -> list[int]:
    """Frames adjacent to an anchor that keep its predicted identity.

    scores: [T, Nc+1] per-frame class scores for one video (unpadded).
    Walking each direction from `frame`, a candidate f is accepted iff
    the argmax classes of f-1, f, f+1 (indices clamped to the sequence)
    all agree, and scores[f, label] >= keep_ratio * scores[frame, label].
    With stop_on_failure the walk ends at the first rejected frame;
    otherwise all 2*radius candidates are tested. The anchor itself is
    not returned.
    """
    if scores.ndim != 2:
        raise ValueError(f"expected a [T, classes] score matrix, got shape {scores.shape}")
    t_len = scores.shape[0]
    if not 0 <= frame < t_len:
        raise ValueError(f"anchor frame {frame} outside video of length {t_len}")
    if not 0 < keep_ratio <= 1:
        raise ValueError(f"keep_ratio must be in (0, 1], got {keep_ratio}")
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if not 0 <= label < scores.shape[1]:
        raise ValueError(f"label {label} outside score columns {scores.shape[1]}")

    argmax = np.argmax(scores, axis=1)
    floor = keep_ratio * scores[frame, label]
    accepted = []
    for direction in (-1, 1):
        for j in range(1, radius + 1):
            f = frame + j * direction
            if not 0 <= f < t_len:
                break
            left = argmax[max(0, f - 1)]
            right = argmax[min(t_len - 1, f + 1)]
            ok = (left == argmax[f] == right) and scores[f, label] >= floor
            if ok:
                accepted.append(f)
            elif stop_on_failure:
                break
    return sorted(accepted)


def mine_background(scores: np.ndarray, mask: np.ndarray,
                    labeled: set[tuple[int, int]], eta: float,
                    num_labeled: int) -> list[tuple[int, int]]:
    """Top floor(eta * num_labeled) background-scoring frames of a batch.

    scores: [N, T, Nc+1]; column 0 is the background class. Candidates
    are unmasked frames not in `labeled` (a set of (video_index, frame)
    pairs). Selection is batch-global: a high-scoring video may supply
    many frames while another supplies none. Ties break by score desc,
    then (video_index, frame) asc. Returns fewer when candidates run out.
    """
    if eta < 0:
        raise ValueError(f"eta must be >= 0, got {eta}")
    want = int(np.floor(eta * num_labeled))
    if want == 0:
        return []
    candidate = mask.copy()
    for v, f in labeled:
        candidate[v, f] = False
    vids, frames = np.nonzero(candidate)
    if vids.size == 0:
        return []
    bg = scores[vids, frames, 0]
    order = np.lexsort((frames, vids, -bg))[:want]
    return [(int(vids[i]), int(frames[i])) for i in order]


def mine_pseudo_labels(scores: np.ndarray, mask: np.ndarray,
                       anchors: list[tuple[int, int, int]], radius: int,
                       keep_ratio: float, eta: float, expand: bool = True,
                       mine_bg: bool = True,
                       stop_on_failure: bool = True) -> PseudoLabels:
    """Run both miners over one batch.

    anchors: (video_index, frame, label) triples with frames already
    validated against true video lengths. A frame claimed by an anchor
    is never re-claimed by expansion (first writer wins), and neither
    kind can be selected as background.
    """
    pool: dict[tuple[int, int], tuple[int, str]] = {}
    for v, f, y in anchors:
        if not mask[v, f]:
            raise ValueError(f"anchor at video {v} frame {f} is a padded frame")
        pool.setdefault((v, f), (y, "anchor"))
    if expand:
        lengths = mask.sum(axis=1)
        for v, f, y in anchors:
            grown = expand_anchor(scores[v, :lengths[v]], f, y, radius,
                                  keep_ratio, stop_on_failure)
            for g in grown:
                pool.setdefault((v, g), (y, "expanded"))
    action = sorted((v, f, y, origin) for (v, f), (y, origin) in pool.items())
    background = []
    if mine_bg:
        background = mine_background(scores, mask, set(pool), eta, len(action))
    return PseudoLabels(action_frames=action, background_frames=background)


# ---------------------------------------------------------------------------
# annotation simulation
# ---------------------------------------------------------------------------

def simulate_annotations(segments, strategy: str, seed) -> list[FrameAnnotation]:
    """One annotated frame per ground-truth segment.

    segments: iterable of objects with video_id, start, end (inclusive),
    label. Strategies:
      uniform      every frame of the segment equally likely
      gaussian_mid normal around the midpoint, sigma = length/6,
                   redrawn until the rounded frame lands inside
      human_like   relative position Beta(4, 4), mid-biased but with
                   heavier shoulders than the gaussian
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}, expected one of {STRATEGIES}")
    rng = np.random.default_rng(seed)
    out = []
    for seg in segments:
        start, end = seg.start, seg.end
        if start > end:
            raise ValueError(f"segment [{start}, {end}] of {seg.video_id} is empty")
        if strategy == "uniform":
            frame = int(rng.integers(start, end + 1))
        elif strategy == "gaussian_mid":
            mid = 0.5 * (start + end)
            sigma = (end - start + 1) / 6.0
            for _ in range(10000):
                frame = int(np.rint(rng.normal(mid, sigma)))
                if start <= frame <= end:
                    break
            else:  # pragma: no cover - needs astronomically unlucky draws
                raise RuntimeError("gaussian_mid resampling failed to land inside segment")
        else:
            rel = rng.beta(4.0, 4.0)
            frame = start + int(np.rint(rel * (end - start)))
        out.append(FrameAnnotation(video_id=seg.video_id, frame=frame, label=seg.label))
    return out


def write_annotation_csv(annotations, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["video_id", "frame", "class"])
        for a in annotations:
            writer.writerow([a.video_id, a.frame, a.label])


def read_annotation_csv(path) -> list[FrameAnnotation]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["video_id", "frame", "class"]:
            raise ValueError(
                f"{path}: expected header 'video_id,frame,class', got {header}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            out.append(FrameAnnotation(video_id=row[0], frame=int(row[1]), label=int(row[2])))
    return out


def check_annotation_counts(annotations, segments) -> None:
    """Warn when annotation and segment counts drift apart per video."""
    per_video_a: dict[str, int] = {}
    per_video_s: dict[str, int] = {}
    for a in annotations:
        per_video_a[a.video_id] = per_video_a.get(a.video_id, 0) + 1
    for s in segments:
        per_video_s[s.video_id] = per_video_s.get(s.video_id, 0) + 1
    for vid, n in per_video_s.items():
        if per_video_a.get(vid, 0) != n:
            warnings.warn(f"video {vid}: {per_video_a.get(vid, 0)} annotations "
                          f"for {n} segments")
