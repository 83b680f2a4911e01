"""Corpus container, synthetic generation, and batch assembly.

Corpus file layout: magic ``SFC1``, a little-endian uint32 header
length, a JSON header (sorted keys, no whitespace) describing dimension,
class count, and one entry per video (id, length, split, ground-truth
segments as [start, end, class], annotations per strategy as
[frame, class]), then one raw block per video in header order: float32
little-endian, frame-major, length x dim. Identical corpora serialize
to identical bytes.

The generator plants non-overlapping action instances on a noise floor.
Each class is a random unit direction in feature space; action frames
add that direction at a fixed scale. A boxcar smoothing over time
(width 7 by default) gives frames the short-range correlation a
temporal conv can pick up and brings per-frame class evidence above the
noise; width 1 disables it.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .inference import Segment
from .mining import STRATEGIES, FrameAnnotation, simulate_annotations

CORPUS_MAGIC = b"SFC1"
CORPUS_VERSION = 1
SPLITS = ("train", "test")


class CorpusFormatError(ValueError):
    """Malformed corpus file; message carries the byte offset."""


class GenerationError(ValueError):
    """SyntheticSpec that cannot be realized."""


@dataclass
class VideoRecord:
    video_id: str
    split: str
    features: np.ndarray  # [T, D] float32
    segments: list[Segment]
    annotations: dict[str, list[FrameAnnotation]] = field(default_factory=dict)

    @property
    def length(self) -> int:
        return self.features.shape[0]


@dataclass
class FeatureCorpus:
    dim: int
    num_classes: int
    videos: list[VideoRecord]

    def split(self, tag: str) -> list[VideoRecord]:
        return [v for v in self.videos if v.split == tag]

    def segments(self, tag: str | None = None) -> list[Segment]:
        videos = self.videos if tag is None else self.split(tag)
        return [s for v in videos for s in v.segments]


@dataclass
class SyntheticSpec:
    num_classes: int = 5
    dim: int = 32
    num_train: int = 80
    num_test: int = 20
    min_length: int = 150
    max_length: int = 250
    min_instances: int = 2
    max_instances: int = 4
    min_instance_length: int = 2
    background_fraction: float = 0.6
    separation: float = 2.0
    noise: float = 1.0
    smoothing: int = 7
    seed: int = 0

    def validate(self) -> None:
        if self.num_train + self.num_test < 1:
            raise GenerationError("corpus needs at least one video")
        if min(self.num_train, self.num_test) < 0:
            raise GenerationError("video counts must be >= 0")
        if self.num_classes < 1 or self.dim < 1:
            raise GenerationError("num_classes and dim must be positive")
        if not 1 <= self.min_length <= self.max_length:
            raise GenerationError(
                f"bad length range [{self.min_length}, {self.max_length}]")
        if not 1 <= self.min_instances <= self.max_instances:
            raise GenerationError(
                f"bad instance range [{self.min_instances}, {self.max_instances}]")
        if not 0 <= self.background_fraction < 1:
            raise GenerationError(
                f"background_fraction must be in [0, 1), got {self.background_fraction}")
        if self.separation <= 0:
            raise GenerationError(f"separation must be > 0, got {self.separation}")
        if self.noise < 0:
            raise GenerationError(f"noise must be >= 0, got {self.noise}")
        if self.smoothing < 1 or self.smoothing % 2 == 0:
            raise GenerationError(f"smoothing must be odd and >= 1, got {self.smoothing}")
        if self.min_instance_length < 1:
            raise GenerationError("min_instance_length must be >= 1")


def _composition(rng: np.random.Generator, total: int, parts: int, minimum: int) -> list[int]:
    """Uniform random composition of `total` into `parts` pieces >= minimum."""
    extra = total - parts * minimum
    if extra < 0:
        raise GenerationError(f"cannot split {total} into {parts} parts of >= {minimum}")
    if parts == 1:
        return [total]
    slots = extra + parts - 1
    bars = np.sort(rng.choice(slots, size=parts - 1, replace=False))
    edges = np.concatenate(([-1], bars, [slots]))
    return [int(edges[i + 1] - edges[i] - 1 + minimum) for i in range(parts)]


def boxcar_smooth(x: np.ndarray, width: int) -> np.ndarray:
    """Centered moving average over axis 0; edge windows shrink."""
    if width == 1:
        return x
    half = width // 2
    t = x.shape[0]
    padded = np.zeros((t + 2 * half,) + x.shape[1:], dtype=np.float64)
    padded[half:half + t] = x
    csum = np.cumsum(padded, axis=0)
    sums = np.empty_like(x, dtype=np.float64)
    for i in range(t):
        lo, hi = i, i + width  # window [i-half, i+half] in padded coords
        sums[i] = csum[hi - 1] - (csum[lo - 1] if lo > 0 else 0)
    counts = np.minimum(np.arange(t) + half + 1, t) - np.maximum(np.arange(t) - half, 0)
    return sums / counts[(...,) + (None,) * (x.ndim - 1)]


def class_groups(num_classes: int) -> list[tuple[int, ...]]:
    """Fixed co-occurrence groups: consecutive pairs, odd tail folded into a triple.

    5 classes -> [(1, 2), (3, 4, 5)]; 4 -> [(1, 2), (3, 4)]; 3 -> [(1, 2, 3)].
    """
    labels = list(range(1, num_classes + 1))
    groups: list[tuple[int, ...]] = []
    while len(labels) >= 4:
        groups.append((labels[0], labels[1]))
        labels = labels[2:]
    if labels:
        groups.append(tuple(labels))
    return groups


def generate_corpus(spec: SyntheticSpec) -> FeatureCorpus:
    """Deterministic synthetic corpus with planted action segments.

    Each video draws its instance classes from one fixed co-occurrence
    group (think kitchen or assembly footage, where related actions
    recur together). Videos with two or more instances always contain
    at least two distinct classes of their group, so the video-level
    label set is symmetric under relabeling within the group and only
    frame-level evidence can pin down which instance is which class.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    protos = rng.standard_normal((spec.num_classes, spec.dim))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    groups = class_groups(spec.num_classes)
    group_of = {c: g for g in groups for c in g}

    videos: list[VideoRecord] = []
    plan = [("train", i) for i in range(spec.num_train)]
    plan += [("test", i) for i in range(spec.num_test)]
    for split, i in plan:
        vid = f"{split}_{i:03d}"
        t = int(rng.integers(spec.min_length, spec.max_length + 1))
        palette = np.asarray(group_of[int(rng.integers(1, spec.num_classes + 1))])
        # every group class appears equally often, so neither the label
        # set nor its multiplicities single out one class of the group
        reps = [r for r in range(1, spec.max_instances // len(palette) + 1)
                if spec.min_instances <= r * len(palette) <= spec.max_instances]
        if reps:
            labels = np.repeat(palette, reps[int(rng.integers(len(reps)))])
        else:  # group too large for the instance budget: partial coverage
            labels = rng.permutation(palette)[:spec.max_instances]
        rng.shuffle(labels)
        n_inst = len(labels)
        action_total = int(round((1.0 - spec.background_fraction) * t))
        if action_total < n_inst * spec.min_instance_length:
            raise GenerationError(
                f"{vid}: {n_inst} instances of >= {spec.min_instance_length} frames "
                f"do not fit in {action_total} action frames")
        if t - action_total < n_inst - 1:
            raise GenerationError(
                f"{vid}: not enough background frames to separate {n_inst} instances")
        inst_lengths = _composition(rng, action_total, n_inst, spec.min_instance_length)
        # gaps: edges may be empty, interior gaps need >= 1 frame
        gaps = _composition(rng, t - action_total - (n_inst - 1), n_inst + 1, 0)
        for g in range(1, n_inst):
            gaps[g] += 1

        features = rng.standard_normal((t, spec.dim)) * spec.noise
        segments = []
        cursor = 0
        for j in range(n_inst):
            cursor += gaps[j]
            start = cursor
            end = cursor + inst_lengths[j] - 1
            features[start:end + 1] += spec.separation * protos[labels[j] - 1]
            segments.append(Segment(video_id=vid, start=start, end=end,
                                    label=int(labels[j])))
            cursor = end + 1
        features = boxcar_smooth(features, spec.smoothing)
        videos.append(VideoRecord(video_id=vid, split=split,
                                  features=features.astype(np.float32),
                                  segments=segments))

    by_id = {v.video_id: v for v in videos}
    all_segments = [s for v in videos for s in v.segments]
    for k, strategy in enumerate(STRATEGIES):
        annotations = simulate_annotations(all_segments, strategy, [spec.seed, 1000 + k])
        for v in videos:
            v.annotations[strategy] = []
        for a in annotations:
            by_id[a.video_id].annotations[strategy].append(a)
    return FeatureCorpus(dim=spec.dim, num_classes=spec.num_classes, videos=videos)


def nearest_prototype_accuracy(corpus: FeatureCorpus, spec: SyntheticSpec) -> float:
    """Fraction of action frames closest to their own class direction.

    Rebuilds the prototypes from the spec seed (the generator draws them
    first), then classifies every ground-truth action frame by nearest
    scaled prototype.
    """
    rng = np.random.default_rng(spec.seed)
    protos = rng.standard_normal((spec.num_classes, spec.dim))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    targets = spec.separation * protos
    hits = 0
    total = 0
    for v in corpus.videos:
        feats = v.features.astype(np.float64)
        for s in v.segments:
            frames = feats[s.start:s.end + 1]
            d2 = ((frames[:, None, :] - targets[None, :, :]) ** 2).sum(axis=2)
            hits += int(np.sum(np.argmin(d2, axis=1) + 1 == s.label))
            total += frames.shape[0]
    return hits / max(1, total)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_corpus(corpus: FeatureCorpus, path) -> None:
    header = {
        "version": CORPUS_VERSION,
        "dim": corpus.dim,
        "num_classes": corpus.num_classes,
        "videos": [
            {
                "id": v.video_id,
                "length": v.length,
                "split": v.split,
                "segments": [[s.start, s.end, s.label] for s in v.segments],
                "annotations": {
                    strat: [[a.frame, a.label] for a in anns]
                    for strat, anns in sorted(v.annotations.items())
                },
            }
            for v in corpus.videos
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CORPUS_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for v in corpus.videos:
            f.write(np.ascontiguousarray(v.features, dtype="<f4").tobytes())


def load_corpus(path) -> FeatureCorpus:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != CORPUS_MAGIC:
        raise CorpusFormatError(
            f"{path}: offset 0: bad magic {raw[:4]!r}, expected {CORPUS_MAGIC!r}")
    if len(raw) < 8:
        raise CorpusFormatError(f"{path}: offset 4: truncated before header length")
    (hlen,) = struct.unpack_from("<I", raw, 4)
    if len(raw) < 8 + hlen:
        raise CorpusFormatError(f"{path}: offset 8: header of {hlen} bytes truncated")
    try:
        header = json.loads(raw[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorpusFormatError(f"{path}: offset 8: unparseable header: {e}") from e
    if header.get("version") != CORPUS_VERSION:
        raise CorpusFormatError(
            f"{path}: unsupported corpus version {header.get('version')}")
    dim = int(header["dim"])
    num_classes = int(header["num_classes"])
    if dim < 1 or num_classes < 1:
        raise CorpusFormatError(f"{path}: invalid dim/num_classes in header")
    videos = []
    offset = 8 + hlen
    for entry in header["videos"]:
        vid = entry["id"]
        length = int(entry["length"])
        split = entry["split"]
        if split not in SPLITS:
            raise CorpusFormatError(f"{path}: video {vid}: unknown split {split!r}")
        if length < 1:
            raise CorpusFormatError(f"{path}: video {vid}: non-positive length")
        nbytes = length * dim * 4
        if offset + nbytes > len(raw):
            raise CorpusFormatError(
                f"{path}: offset {offset}: feature block of video {vid} truncated")
        features = np.frombuffer(raw, dtype="<f4", count=length * dim,
                                 offset=offset).reshape(length, dim).copy()
        if not np.all(np.isfinite(features)):
            raise CorpusFormatError(
                f"{path}: offset {offset}: non-finite feature value in video {vid}")
        segments = []
        for s, e, c in entry["segments"]:
            if not 0 <= s <= e < length:
                raise CorpusFormatError(
                    f"{path}: video {vid}: segment [{s}, {e}] outside 0..{length - 1}")
            segments.append(Segment(video_id=vid, start=int(s), end=int(e), label=int(c)))
        annotations = {}
        for strat, rows in entry.get("annotations", {}).items():
            annotations[strat] = [
                FrameAnnotation(video_id=vid, frame=int(fr), label=int(c))
                for fr, c in rows
            ]
            for a in annotations[strat]:
                if a.frame >= length:
                    raise CorpusFormatError(
                        f"{path}: video {vid}: annotation frame {a.frame} "
                        f"outside 0..{length - 1}")
        videos.append(VideoRecord(video_id=vid, split=split, features=features,
                                  segments=segments, annotations=annotations))
        offset += nbytes
    if offset != len(raw):
        raise CorpusFormatError(
            f"{path}: offset {offset}: {len(raw) - offset} unexpected trailing bytes")
    return FeatureCorpus(dim=dim, num_classes=num_classes, videos=videos)


def write_gt_csv(segments: list[Segment], path) -> None:
    import csv

    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["video_id", "start", "end", "class"])
        for s in segments:
            writer.writerow([s.video_id, s.start, s.end, s.label])


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------

@dataclass
class Batch:
    video_ids: list[str]
    features: np.ndarray  # [N, T, D] float64, zero-padded
    lengths: np.ndarray   # [N]
    anchors: list[tuple[int, int, int]]  # (batch_index, frame, label)


def collate(videos: list[VideoRecord], strategy: str | None = None) -> Batch:
    """Zero-pad a video group to the batch maximum length."""
    if not videos:
        raise ValueError("cannot collate an empty video list")
    lengths = np.array([v.length for v in videos], dtype=np.int64)
    t_max = int(lengths.max())
    dim = videos[0].features.shape[1]
    x = np.zeros((len(videos), t_max, dim), dtype=np.float64)
    anchors = []
    for i, v in enumerate(videos):
        if v.features.shape[1] != dim:
            raise ValueError(f"video {v.video_id}: feature dim {v.features.shape[1]} "
                             f"differs from batch dim {dim}")
        x[i, :v.length] = v.features
        if strategy is not None:
            for a in v.annotations.get(strategy, []):
                if a.frame >= v.length:
                    raise ValueError(f"video {v.video_id}: annotation frame {a.frame} "
                                     f"outside its {v.length} frames")
                anchors.append((i, a.frame, a.label))
    return Batch(video_ids=[v.video_id for v in videos], features=x,
                 lengths=lengths, anchors=anchors)


def make_batches(videos: list[VideoRecord], batch_size: int, seed,
                 strategy: str | None = None) -> list[Batch]:
    """One epoch of shuffled batches; every video appears exactly once."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = np.random.default_rng(seed).permutation(len(videos))
    shuffled = [videos[i] for i in order]
    return [collate(shuffled[i:i + batch_size], strategy)
            for i in range(0, len(shuffled), batch_size)]
