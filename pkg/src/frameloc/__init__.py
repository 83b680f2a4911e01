"""Temporal action localization from one labeled frame per instance."""

from .autodiff import Tape, Tensor
from .config import TrainConfig, load_config
from .data import (Batch, FeatureCorpus, SyntheticSpec, VideoRecord,
                   generate_corpus, load_corpus, make_batches, save_corpus)
from .inference import (FrameDetection, Segment, extract_segments,
                        localize_single_frames, predict_video_labels)
from .losses import LossBreakdown
from .metrics import (class_agnostic_ap, compute_report, map_at_hit,
                      segment_ap, segment_map, temporal_iou,
                      video_classification_map)
from .mining import (FrameAnnotation, PseudoLabels, expand_anchor,
                     mine_background, mine_pseudo_labels, simulate_annotations)
from .model import ModelDims, init_params, load_checkpoint, save_checkpoint, score_batch
from .optim import Adam, grad_check
from .training import (TrainResult, evaluate_params, run_gradcheck,
                       run_training, sweep_parameter)

__version__ = "0.1.0"

__all__ = [
    "Adam", "Batch", "FeatureCorpus", "FrameAnnotation", "FrameDetection",
    "LossBreakdown", "ModelDims", "PseudoLabels", "Segment", "SyntheticSpec",
    "Tape", "Tensor", "TrainConfig", "TrainResult", "VideoRecord",
    "class_agnostic_ap", "compute_report", "evaluate_params", "expand_anchor",
    "extract_segments", "generate_corpus", "grad_check", "init_params",
    "load_checkpoint", "load_config", "load_corpus", "localize_single_frames",
    "make_batches", "map_at_hit", "mine_background", "mine_pseudo_labels",
    "predict_video_labels", "run_gradcheck", "run_training", "save_checkpoint",
    "save_corpus", "score_batch", "segment_ap", "segment_map",
    "simulate_annotations", "sweep_parameter", "temporal_iou",
    "video_classification_map",
]
