"""Acceptance gate: eight end-to-end properties of the whole package.

Every test prints one PASS/FAIL line with its measured numbers (outside
pytest's capture, so the ledger is visible on green runs too) and then
asserts. Criteria 5 and 6 train real models on the default synthetic
corpus; they share a cache so each (ablation, strategy, seed) combination
trains exactly once per session.
"""

import dataclasses
import time
import warnings

import numpy as np
import pytest

import frameloc.autodiff as ad
from frameloc.autodiff import Tensor
from frameloc.cli import main
from frameloc.config import TrainConfig
from frameloc.data import SyntheticSpec, generate_corpus
from frameloc.inference import (FrameDetection, Segment, extract_segments,
                                localize_single_frames, predict_video_labels)
from frameloc.losses import (actionness_loss, frame_loss_background,
                             frame_loss_labeled, total_loss, video_loss)
from frameloc.metrics import (IOU_GRID, class_agnostic_ap, map_at_hit,
                              segment_ap, segment_map)
from frameloc.mining import expand_anchor, mine_background, mine_pseudo_labels
from frameloc.model import ModelDims, init_params, score_batch
from frameloc.training import evaluate_params, run_gradcheck, run_training


def _verdict(capsys, number, name, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {number}] {name}: "
              f"{'PASS' if ok else 'FAIL'} ({detail})")
    return ok


# ---------------------------------------------------------------------------
# 1. gradient correctness
# ---------------------------------------------------------------------------

def _numeric_grad(fn, x, step=1e-6):
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    out = g.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        hi = fn()
        flat[i] = keep - step
        lo = fn()
        flat[i] = keep
        out[i] = (hi - lo) / (2 * step)
    return g


def _op_cases(rng):
    """Scalar objectives exercising each differentiable primitive."""
    x34 = rng.standard_normal((3, 4)) + 0.3
    x234 = rng.standard_normal((2, 3, 4))
    multiplier = Tensor(x34.copy() + 1.0)
    w45 = rng.standard_normal((4, 5))
    b5 = rng.standard_normal(5)
    kernel = rng.standard_normal((3, 4, 5))
    mix = rng.standard_normal(5)
    mask = np.array([[True, True, False], [True, True, True]])
    videos = np.array([0, 1, 1])
    frames = np.array([0, 1, 2])
    classes = np.array([2, 0, 3])
    weights = rng.standard_normal((3, 4))

    def reduce(t):
        flat = t
        while flat.data.ndim > 1:
            flat = ad.sum_all(flat) if flat.data.ndim > 2 else ad.weighted_sum(
                flat, rng.standard_normal(flat.data.shape))
        if flat.data.ndim == 1:
            flat = ad.weighted_sum(flat, mix[:flat.data.shape[0]])
        return flat

    return {
        "add": (x34, lambda t: ad.sum_all(ad.add(t, 1.5))),
        "scale": (x34, lambda t: ad.sum_all(ad.scale(t, -2.5))),
        "multiply": (x34, lambda t: ad.sum_all(ad.multiply(t, multiplier))),
        "relu": (x34, lambda t: ad.sum_all(ad.relu(t))),
        "sigmoid": (x34, lambda t: ad.sum_all(ad.sigmoid(t))),
        "log_sigmoid": (x34, lambda t: ad.sum_all(ad.log_sigmoid(t))),
        "softmax": (x34, lambda t: ad.weighted_sum(ad.softmax(t), weights)),
        "log_softmax": (x34, lambda t: ad.weighted_sum(ad.log_softmax(t), weights)),
        "linear": (x234, lambda t: ad.sum_all(ad.linear(t, Tensor(w45), Tensor(b5)))),
        "conv1d_same": (x234, lambda t: ad.sum_all(
            ad.conv1d_same(t, Tensor(kernel), Tensor(b5)))),
        "mask_frames": (x234, lambda t: ad.sum_all(ad.mask_frames(t, mask))),
        "take_frames": (x234, lambda t: ad.sum_all(ad.take_frames(t, videos, frames))),
        "take_classes": (x34, lambda t: reduce(ad.take_classes(t, classes[:3]))),
        "time_slice": (x234, lambda t: ad.sum_all(ad.time_slice(t, 1, 2))),
        "squeeze_last": (x234[:, :, :1].copy(),
                         lambda t: ad.sum_all(ad.squeeze_last(t))),
        "sum_all": (x34, lambda t: ad.sum_all(t)),
        "mean_all": (x34, lambda t: ad.mean_all(t)),
        "weighted_sum": (x34, lambda t: ad.weighted_sum(t, weights)),
        "topk_mean": (x34.reshape(-1).copy(), lambda t: ad.topk_mean(t, 5)),
        "topk_mean_columns": (x34, lambda t: reduce(ad.topk_mean_columns(t, 2))),
    }


def test_criterion_1_gradient_correctness(capsys):
    start = time.monotonic()
    worst_primitive = ("", 0.0)
    for name, (x, build) in _op_cases(np.random.default_rng(12)).items():
        tape = ad.Tape()
        t = tape.watch(x)
        out = build(t)
        tape.backward(out)
        analytic = t.grad.copy()

        def value():
            return float(build(Tensor(x)).data)

        numeric = _numeric_grad(value, x)
        denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
        err = float(np.max(np.abs(analytic - numeric) / denom))
        if err > worst_primitive[1]:
            worst_primitive = (name, err)

    result, full_ok = run_gradcheck(n=2, t=12, d=6, num_classes=3)
    elapsed = time.monotonic() - start
    ok = (worst_primitive[1] < 1e-6 and full_ok
          and result.max_rel_err < 1e-4 and elapsed < 30)
    _verdict(capsys, 1, "gradient correctness", ok,
             f"objective max rel err {result.max_rel_err:.2e} over "
             f"{result.entries_checked} entries, worst primitive "
             f"{worst_primitive[0]} at {worst_primitive[1]:.2e}, {elapsed:.1f}s")
    assert worst_primitive[1] < 1e-6
    assert result.max_rel_err < 1e-4
    assert elapsed < 30


# ---------------------------------------------------------------------------
# 2. mining equals brute force
# ---------------------------------------------------------------------------

def _oracle_expand(scores, frame, label, radius, keep_ratio):
    """Prefix-closure restatement of the expansion walk."""
    t = scores.shape[0]
    argmax = scores.argmax(axis=1)

    def passes(f):
        trio = (argmax[max(0, f - 1)], argmax[f], argmax[min(t - 1, f + 1)])
        return (trio[0] == trio[1] == trio[2]
                and scores[f, label] >= keep_ratio * scores[frame, label])

    kept = []
    for f in range(frame + 1, min(t, frame + radius + 1)):
        if all(passes(g) for g in range(frame + 1, f + 1)):
            kept.append(f)
    for f in range(max(0, frame - radius), frame):
        if all(passes(g) for g in range(f, frame)):
            kept.append(f)
    return sorted(kept)


def _oracle_background(scores, mask, labeled, eta, num_labeled):
    want = int(np.floor(eta * num_labeled))
    rows = sorted((-scores[v, f, 0], v, f)
                  for v in range(mask.shape[0])
                  for f in range(mask.shape[1])
                  if mask[v, f] and (v, f) not in labeled)
    return [(v, f) for _, v, f in rows[:want]]


def test_criterion_2_mining_matches_brute_force(capsys):
    rng = np.random.default_rng(2024)
    expand_mismatches = 0
    for trial in range(1000):
        t = int(rng.integers(3, 15))
        nc = int(rng.integers(2, 5))
        scores = rng.random((t, nc + 1))
        if trial % 2 == 0:
            scores = np.round(scores, 1)  # force score and argmax ties
        frame = int(rng.integers(t))
        label = int(rng.integers(1, nc + 1))
        radius = int(rng.integers(0, 5))
        keep = float(rng.choice([0.3, 0.7, 0.9, 1.0]))
        got = expand_anchor(scores, frame, label, radius, keep,
                            stop_on_failure=True)
        if got != _oracle_expand(scores, frame, label, radius, keep):
            expand_mismatches += 1

    bg_mismatches = 0
    for trial in range(1000):
        n = int(rng.integers(1, 4))
        t = int(rng.integers(3, 11))
        nc = int(rng.integers(1, 4))
        lengths = rng.integers(1, t + 1, size=n)
        mask = np.arange(t)[None, :] < lengths[:, None]
        scores = np.round(rng.random((n, t, nc + 1)), 1)
        candidates = [(v, f) for v in range(n) for f in range(t) if mask[v, f]]
        k = int(rng.integers(0, len(candidates) + 1))
        picks = rng.choice(len(candidates), size=k, replace=False)
        labeled = {candidates[i] for i in picks}
        eta = float(rng.choice([0.0, 0.5, 1.0, 2.5]))
        num_labeled = int(rng.integers(0, 6))
        got = mine_background(scores, mask, labeled, eta, num_labeled)
        if got != _oracle_background(scores, mask, labeled, eta, num_labeled):
            bg_mismatches += 1

    ok = expand_mismatches == 0 and bg_mismatches == 0
    _verdict(capsys, 2, "mining equals brute force", ok,
             f"1000 expansion trials, {expand_mismatches} mismatches; "
             f"1000 background trials, {bg_mismatches} mismatches")
    assert expand_mismatches == 0
    assert bg_mismatches == 0


# ---------------------------------------------------------------------------
# 3. metrics equal brute force
# ---------------------------------------------------------------------------

def _iou(a, b):
    inter = min(a.end, b.end) - max(a.start, b.start) + 1
    if inter <= 0:
        return 0.0
    return inter / (a.length + b.length - inter)


def _staircase(flags, n_gt):
    ap, tp = 0.0, 0
    for rank, flag in enumerate(flags, start=1):
        if flag:
            tp += 1
            ap += (tp / rank) / n_gt
    return ap


def _oracle_segment_ap(preds, gts, label, thr):
    gt = sorted((g for g in gts if g.label == label),
                key=lambda g: (g.video_id, g.start, g.end))
    order = sorted((p for p in preds if p.label == label),
                   key=lambda p: (-p.confidence, p.video_id, p.start))
    taken = set()
    flags = []
    for p in order:
        ious = {j: _iou(p, g) for j, g in enumerate(gt)
                if j not in taken and g.video_id == p.video_id}
        hit = False
        if ious:
            best = max(ious.values())
            j = min(k for k, v in ious.items() if v == best)
            if best >= thr:
                taken.add(j)
                hit = True
        flags.append(hit)
    return _staircase(flags, len(gt))


def _oracle_hit_map(dets, gts):
    aps = []
    for label in sorted({g.label for g in gts}):
        gt = sorted((g for g in gts if g.label == label),
                    key=lambda g: (g.video_id, g.start, g.end))
        order = sorted((d for d in dets if d.label == label),
                       key=lambda d: (-d.confidence, d.video_id, d.frame))
        taken = set()
        flags = []
        for d in order:
            j = next((j for j, g in enumerate(gt)
                      if j not in taken and g.video_id == d.video_id
                      and g.start <= d.frame <= g.end), None)
            if j is None:
                flags.append(False)
            else:
                taken.add(j)
                flags.append(True)
        aps.append(_staircase(flags, len(gt)))
    return float(np.mean(aps))


def _random_segments(rng, count, classes, videos):
    out = []
    for _ in range(count):
        start = int(rng.integers(0, 25))
        out.append(Segment(video_id=str(rng.choice(videos)),
                           start=start, end=start + int(rng.integers(0, 8)),
                           label=int(rng.integers(1, classes + 1)),
                           confidence=round(float(rng.random()), 1)))
    return out


def test_criterion_3_metrics_match_brute_force(capsys):
    rng = np.random.default_rng(77)
    videos = ["a", "b", "c"]
    worst = 0.0
    gt_as_pred_ok = True
    for trial in range(500):
        classes = int(rng.integers(1, 4))
        gts = _random_segments(rng, int(rng.integers(1, 11)), classes, videos)
        preds = _random_segments(rng, int(rng.integers(0, 11)), classes, videos)
        dets = [FrameDetection(video_id=str(rng.choice(videos)),
                               frame=int(rng.integers(0, 30)),
                               label=int(rng.integers(1, classes + 1)),
                               confidence=round(float(rng.random()), 1))
                for _ in range(int(rng.integers(0, 11)))]
        thr = float(rng.choice([0.1, 0.3, 0.5, 0.7]))

        label = int(rng.choice(sorted({g.label for g in gts})))
        worst = max(worst, abs(segment_ap(preds, gts, label, thr)
                               - _oracle_segment_ap(preds, gts, label, thr)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            worst = max(worst, abs(map_at_hit(dets, gts) - _oracle_hit_map(dets, gts)))
            agn = class_agnostic_ap(preds, gts, thr)
        collapsed_p = [dataclasses.replace(p, label=1) for p in preds]
        collapsed_g = [dataclasses.replace(g, label=1) for g in gts]
        worst = max(worst, abs(agn - _oracle_segment_ap(collapsed_p, collapsed_g,
                                                        1, thr)))
        if trial % 5 == 0:
            echo = [dataclasses.replace(g, confidence=float(rng.random()))
                    for g in gts]
            for grid_thr in IOU_GRID:
                if abs(segment_map(echo, gts, grid_thr) - 1.0) > 1e-12:
                    gt_as_pred_ok = False

    ok = worst < 1e-9 and gt_as_pred_ok
    _verdict(capsys, 3, "metrics equal brute force", ok,
             f"500 trials, worst abs difference {worst:.2e}, "
             f"ground-truth-as-predictions perfect: {gt_as_pred_ok}")
    assert worst < 1e-9
    assert gt_as_pred_ok


# ---------------------------------------------------------------------------
# 4. padding invariance
# ---------------------------------------------------------------------------

def _pipeline(params, features, lengths, anchors, cfg, num_classes):
    maps = score_batch(params, features, lengths)
    probs = ad.stable_softmax(maps.C.data, axis=-1)
    mined = mine_pseudo_labels(probs, maps.mask, anchors, cfg.radius,
                               cfg.keep_ratio, cfg.eta)
    labeled = frame_loss_labeled(maps.C, maps.mask, mined.action_triples())
    background = frame_loss_background(maps.C, maps.mask, mined.background_frames)
    actionness = actionness_loss(maps.A, maps.mask, mined.action_triples(),
                                 mined.background_frames)
    video = video_loss(maps.C, maps.mask, anchors, num_classes, cfg.topk_ratio)
    _, breakdown = total_loss(labeled, background, actionness, video,
                              num_classes, cfg.alpha, cfg.beta)
    ids = [f"v{i}" for i in range(features.shape[0])]
    labels = predict_video_labels(maps.C.data, maps.mask, cfg.video_threshold)
    segments = extract_segments(maps.C.data, maps.A.data, maps.mask, ids,
                                labels, cfg.segment_threshold)
    detections = localize_single_frames(segments, maps.C.data, maps.A.data,
                                        maps.mask, ids)
    return breakdown, mined, segments, detections


def test_criterion_4_padding_invariance(capsys):
    rng = np.random.default_rng(404)
    cfg = TrainConfig(radius=2, keep_ratio=0.7, eta=2.0)
    num_classes = 3
    dims = ModelDims(feature_dim=6, hidden=8, num_classes=num_classes,
                     conv_width=3)
    worst = 0.0
    structural_diffs = 0
    for trial in range(50):
        params = init_params(dims, 1000 + trial)
        n = 3
        lengths = rng.integers(6, 15, size=n)
        t1 = int(lengths.max())
        feats = np.zeros((n, t1, 6))
        anchors = []
        for v in range(n):
            feats[v, :lengths[v]] = rng.standard_normal((lengths[v], 6))
            for f in rng.choice(lengths[v], size=2, replace=False):
                anchors.append((v, int(f), int(rng.integers(1, num_classes + 1))))
        feats2 = np.zeros((n, 2 * t1, 6))
        feats2[:, :t1] = feats

        a = _pipeline(params, feats, lengths, anchors, cfg, num_classes)
        b = _pipeline(params, feats2, lengths, anchors, cfg, num_classes)
        for field in dataclasses.fields(a[0]):
            diff = abs(getattr(a[0], field.name) - getattr(b[0], field.name))
            worst = max(worst, diff)
        if (a[1].action_frames != b[1].action_frames
                or a[1].background_frames != b[1].background_frames
                or a[2] != b[2] or a[3] != b[3]):
            structural_diffs += 1

    ok = worst <= 1e-9 and structural_diffs == 0
    _verdict(capsys, 4, "padding invariance", ok,
             f"50 batches, worst loss drift {worst:.2e}, "
             f"{structural_diffs} mined/segment/detection differences")
    assert worst <= 1e-9
    assert structural_diffs == 0


# ---------------------------------------------------------------------------
# 5 and 6. supervision ladder and annotation-strategy trend
# ---------------------------------------------------------------------------

LADDER_RUNGS = {
    "weak": dict(weak_only=True, use_background=False, use_actionness=False,
                 use_expansion=False),
    "single_frame": dict(use_background=False, use_actionness=False,
                         use_expansion=False),
    "full": dict(),
}

_RUN_CACHE: dict = {}


@pytest.fixture(scope="module")
def default_corpus():
    return generate_corpus(SyntheticSpec())


def _trained_report(corpus, rung, strategy, seed):
    key = (rung, strategy, seed)
    if key not in _RUN_CACHE:
        cfg = TrainConfig(iterations=500, seed=seed, strategy=strategy,
                          **LADDER_RUNGS[rung])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = run_training(corpus, cfg)
            report, _, _ = evaluate_params(corpus, result.params, cfg)
        _RUN_CACHE[key] = report
    return _RUN_CACHE[key]


def test_criterion_5_supervision_ladder(capsys, default_corpus):
    start = time.monotonic()
    medians = {}
    for rung in LADDER_RUNGS:
        scores = [100 * _trained_report(default_corpus, rung, "uniform",
                                        seed)["AVG(0.1:0.7)"]
                  for seed in range(5)]
        medians[rung] = float(np.median(scores))
    elapsed = time.monotonic() - start
    sf_gain = medians["single_frame"] - medians["weak"]
    full_gain = medians["full"] - medians["single_frame"]
    ok = sf_gain >= 10 and full_gain >= 3 and elapsed < 900
    _verdict(capsys, 5, "supervision ladder", ok,
             f"median AVG mAP(0.1:0.7) weak {medians['weak']:.2f} "
             f"-> single-frame {medians['single_frame']:.2f} "
             f"-> full {medians['full']:.2f}; gains +{sf_gain:.2f} "
             f"(need 10) and +{full_gain:.2f} (need 3); {elapsed:.0f}s")
    assert sf_gain >= 10
    assert full_gain >= 3
    assert elapsed < 900


def test_criterion_6_annotation_strategy_trend(capsys, default_corpus):
    medians = {}
    for strategy in ("uniform", "gaussian_mid", "human_like"):
        scores = [100 * _trained_report(default_corpus, "full", strategy,
                                        seed)["mAP@hit"]
                  for seed in range(5)]
        medians[strategy] = float(np.median(scores))
    band = 2.0
    ok = (medians["human_like"] >= medians["gaussian_mid"] - band
          and medians["uniform"] >= medians["gaussian_mid"] - band)
    _verdict(capsys, 6, "annotation-strategy trend", ok,
             f"median mAP@hit uniform {medians['uniform']:.2f}, "
             f"gaussian_mid {medians['gaussian_mid']:.2f}, "
             f"human_like {medians['human_like']:.2f}; "
             f"band +-{band:.0f} points")
    assert medians["human_like"] >= medians["gaussian_mid"] - band
    assert medians["uniform"] >= medians["gaussian_mid"] - band


# ---------------------------------------------------------------------------
# 7. end-to-end determinism
# ---------------------------------------------------------------------------

def test_criterion_7_end_to_end_determinism(capsys, tmp_path):
    gen_args = ["--set", "num_classes=3", "--set", "dim=8",
                "--set", "num_train=6", "--set", "num_test=2",
                "--set", "min_length=40", "--set", "max_length=60"]
    train_args = ["--set", "iterations=15", "--set", "batch_size=4",
                  "--set", "hidden=16"]
    reports = []
    for run in ("first", "second"):
        root = tmp_path / run
        root.mkdir()
        corpus = root / "corpus.sfc"
        ckpt = root / "model.ckpt"
        report = root / "report.csv"
        assert main(["gen", "--out", str(corpus)] + gen_args) == 0
        assert main(["train", "--corpus", str(corpus), "--checkpoint",
                     str(ckpt), "--log", str(root / "log.csv")] + train_args) == 0
        assert main(["eval", "--corpus", str(corpus), "--checkpoint",
                     str(ckpt), "--report", str(report)] + train_args) == 0
        reports.append(report.read_bytes())
    ok = reports[0] == reports[1]
    _verdict(capsys, 7, "end-to-end determinism", ok,
             f"two gen->train->eval runs, report bytes "
             f"{'identical' if ok else 'DIFFER'} ({len(reports[0])} bytes)")
    assert ok


# ---------------------------------------------------------------------------
# 8. background-loss scale
# ---------------------------------------------------------------------------

def test_criterion_8_background_weight(capsys):
    zero = Tensor(0.0)
    _, breakdown = total_loss(zero, Tensor(1.0), zero, zero,
                              num_classes=20, alpha=1.0, beta=1.0)
    error = abs(breakdown.frame_total - 0.05)
    ok = error < 1e-12
    _verdict(capsys, 8, "background-loss scale", ok,
             f"unit background loss at 20 classes adds "
             f"{breakdown.frame_total:.17g} to the frame term, "
             f"error {error:.1e}")
    assert error < 1e-12
