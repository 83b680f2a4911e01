"""Training loop behavior, evaluation driver, sweeps, and gradient checks."""

import dataclasses

import numpy as np
import pytest

from frameloc.config import TrainConfig
from frameloc.data import SyntheticSpec, collate, generate_corpus
from frameloc.model import ModelDims, init_params
from frameloc.optim import Adam
from frameloc.training import (
    SWEEP_PARAMS,
    TrainingDiverged,
    evaluate_params,
    run_gradcheck,
    run_training,
    sweep_parameter,
    train_step,
    write_training_log,
)

FAST = TrainConfig(iterations=12, batch_size=4, hidden=16)


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(SyntheticSpec(num_classes=3, dim=8, num_train=8,
                                         num_test=3, min_length=40,
                                         max_length=60, seed=5))


def test_training_runs_and_logs(corpus):
    result = run_training(corpus, FAST)
    assert len(result.log) == FAST.iterations
    assert [i for i, _ in result.log] == list(range(1, FAST.iterations + 1))
    assert result.dims == ModelDims(feature_dim=8, hidden=16, num_classes=3,
                                    conv_width=3)
    for value in result.params.values():
        assert np.all(np.isfinite(value))


def test_training_is_deterministic(corpus):
    a = run_training(corpus, FAST)
    b = run_training(corpus, FAST)
    for key in a.params:
        np.testing.assert_array_equal(a.params[key], b.params[key])
    assert [bd.total for _, bd in a.log] == [bd.total for _, bd in b.log]


def test_loss_decreases(corpus):
    cfg = dataclasses.replace(FAST, iterations=60)
    result = run_training(corpus, cfg)
    totals = [bd.total for _, bd in result.log]
    assert np.mean(totals[-5:]) < np.mean(totals[:5])


def test_weak_only_disables_frame_terms(corpus):
    cfg = dataclasses.replace(FAST, iterations=4, weak_only=True)
    result = run_training(corpus, cfg)
    for _, bd in result.log:
        assert bd.frame_labeled == 0.0
        assert bd.frame_background == 0.0
        assert bd.actionness == 0.0
        assert bd.video > 0.0


def test_ablation_flags_zero_their_terms(corpus):
    cfg = dataclasses.replace(FAST, iterations=4, use_background=False)
    for _, bd in run_training(corpus, cfg).log:
        assert bd.frame_background == 0.0 and bd.frame_labeled > 0.0
    cfg = dataclasses.replace(FAST, iterations=4, use_actionness=False)
    for _, bd in run_training(corpus, cfg).log:
        assert bd.actionness == 0.0


def test_missing_split_or_annotations_rejected(corpus):
    test_only = dataclasses.replace(corpus, videos=corpus.split("test"))
    with pytest.raises(ValueError, match="train"):
        run_training(test_only, FAST)
    stripped = dataclasses.replace(
        corpus,
        videos=[dataclasses.replace(v, annotations={}) for v in corpus.videos])
    with pytest.raises(ValueError, match="annotations"):
        run_training(stripped, FAST)


def test_nonfinite_loss_raises(corpus):
    dims = ModelDims(feature_dim=8, hidden=16, num_classes=3, conv_width=3)
    params = init_params(dims, 0)
    params["cls_w1"][0, 0] = np.nan
    batch = collate(corpus.split("train")[:2], strategy="uniform")
    with pytest.raises(TrainingDiverged):
        train_step(batch, params, Adam(params), FAST, num_classes=3)


def test_write_training_log(tmp_path, corpus):
    cfg = dataclasses.replace(FAST, iterations=3)
    result = run_training(corpus, cfg)
    path = tmp_path / "log.csv"
    write_training_log(result.log, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iter,frame_l,frame_b,actionness,video,total"
    assert len(lines) == 4
    assert lines[1].startswith("1,")


def test_evaluate_params_report_shape(corpus):
    result = run_training(corpus, FAST)
    report, segments, detections = evaluate_params(corpus, result.params, FAST)
    keys = list(report)
    assert keys[:7] == [f"mAP@{t:.1f}" for t in
                        (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7)]
    assert "AVG(0.1:0.7)" in keys and "mAP@hit" in keys and "video-mAP" in keys
    assert all(np.isfinite(v) for v in report.values())
    test_ids = {v.video_id for v in corpus.split("test")}
    assert {s.video_id for s in segments} <= test_ids
    assert {d.video_id for d in detections} <= test_ids
    assert len(detections) <= len(segments)


def test_evaluate_params_rejects_mismatched_corpus(corpus):
    result = run_training(corpus, FAST)
    other = generate_corpus(SyntheticSpec(num_classes=3, dim=4, num_train=2,
                                          num_test=1, min_length=40,
                                          max_length=50, seed=9))
    with pytest.raises(ValueError, match="dim"):
        evaluate_params(other, result.params, FAST)
    with pytest.raises(ValueError, match="split"):
        evaluate_params(corpus, result.params, FAST, split="validation")


def test_sweep_parameter(corpus):
    cfg = dataclasses.replace(FAST, iterations=2)
    rows = sweep_parameter(corpus, cfg, "theta", [0.5, 0.9])
    assert [v for v, _ in rows] == [0.5, 0.9]
    for _, report in rows:
        assert "AVG(0.1:0.7)" in report
    with pytest.raises(ValueError, match="sweep parameter"):
        sweep_parameter(corpus, cfg, "lr", [0.1])
    assert set(SWEEP_PARAMS) == {"eta", "alpha", "beta", "theta"}


def test_gradcheck_passes_on_clean_objective():
    result, ok = run_gradcheck()
    assert ok
    assert result.max_rel_err < 1e-4
    assert result.entries_checked > 100


def test_gradcheck_catches_planted_bug():
    result, ok = run_gradcheck(corrupt=True)
    assert not ok
    assert result.worst_param == "cls_w2"
    assert result.max_rel_err > 1e-2
