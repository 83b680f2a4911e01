"""Two-head frame scoring model.

Classification head: three per-frame linear layers (D -> H -> H -> Nc+1)
with ReLU between them; class 0 is background. Actionness head: two
width-k temporal convolutions (D -> H -> H) with ReLU, then a linear
layer to one class-agnostic score per frame.

Parameters live in a flat dict[str, ndarray] so the optimizer and the
gradient checker can treat them uniformly. forward() consumes Tensor
views of those arrays (taped during training, constants at inference).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor


@dataclass(frozen=True)
class ModelDims:
    feature_dim: int
    hidden: int
    num_classes: int  # action classes; scores carry num_classes + 1 columns
    conv_width: int

    def validate(self) -> None:
        if min(self.feature_dim, self.hidden, self.num_classes, self.conv_width) < 1:
            raise ValueError(f"all model dimensions must be positive: {self}")
        if self.conv_width % 2 == 0:
            raise ValueError(f"conv_width must be odd, got {self.conv_width}")


@dataclass
class ScoreMaps:
    """Raw per-frame logits plus the padding mask (True = real frame)."""

    C: Tensor  # [N, T, Nc+1]
    A: Tensor  # [N, T]
    mask: np.ndarray  # bool [N, T]


def init_params(dims: ModelDims, seed: int) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases, fully determined by seed."""
    dims.validate()
    rng = np.random.default_rng(seed)
    d, h, kw = dims.feature_dim, dims.hidden, dims.conv_width
    c = dims.num_classes + 1

    def glorot(shape, fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape)

    params = {
        "cls_w1": glorot((d, h), d, h),
        "cls_b1": np.zeros(h),
        "cls_w2": glorot((h, h), h, h),
        "cls_b2": np.zeros(h),
        "cls_w3": glorot((h, c), h, c),
        "cls_b3": np.zeros(c),
        "act_k1": glorot((kw, d, h), kw * d, kw * h),
        "act_c1": np.zeros(h),
        "act_k2": glorot((kw, h, h), kw * h, kw * h),
        "act_c2": np.zeros(h),
        "act_w": glorot((h, 1), h, 1),
        "act_b": np.zeros(1),
    }
    return params


def make_mask(lengths: np.ndarray, padded_len: int) -> np.ndarray:
    lengths = np.asarray(lengths, dtype=np.int64)
    if lengths.ndim != 1:
        raise ValueError(f"lengths must be 1-D, got shape {lengths.shape}")
    if np.any(lengths < 1):
        raise ValueError(f"every video needs at least one frame, got lengths {lengths.tolist()}")
    if np.any(lengths > padded_len):
        bad = int(lengths.max())
        raise ValueError(f"length {bad} exceeds padded batch length {padded_len}")
    return np.arange(padded_len) < lengths[:, None]


def forward(param_tensors: dict[str, Tensor], x: Tensor, lengths: np.ndarray) -> ScoreMaps:
    """Score a padded batch. x: [N, T, D]; lengths give true frame counts.

    Logits are produced for padded frames too; the mask marks them so
    later stages never consume them.
    """
    p = param_tensors
    if x.data.ndim != 3:
        raise ad.ShapeError(f"forward expects x of shape [N, T, D], got {x.data.shape}")
    mask = make_mask(lengths, x.data.shape[1])

    h1 = ad.relu(ad.linear(x, p["cls_w1"], p["cls_b1"]))
    h2 = ad.relu(ad.linear(h1, p["cls_w2"], p["cls_b2"]))
    c_logits = ad.linear(h2, p["cls_w3"], p["cls_b3"])

    a1 = ad.mask_frames(ad.relu(ad.conv1d_same(x, p["act_k1"], p["act_c1"])), mask)
    a2 = ad.relu(ad.conv1d_same(a1, p["act_k2"], p["act_c2"]))
    a_logits = ad.squeeze_last(ad.linear(a2, p["act_w"], p["act_b"]))

    return ScoreMaps(C=c_logits, A=a_logits, mask=mask)


def score_batch(params: dict[str, np.ndarray], features: np.ndarray,
                lengths: np.ndarray) -> ScoreMaps:
    """Inference helper: forward pass without gradient tracking."""
    tensors = {k: Tensor(v) for k, v in params.items()}
    return forward(tensors, Tensor(features), lengths)


def watch_params(tape: Tape, params: dict[str, np.ndarray]) -> dict[str, Tensor]:
    return {k: tape.watch(v) for k, v in params.items()}


def infer_dims(params: dict[str, np.ndarray]) -> ModelDims:
    kw, d, h = params["act_k1"].shape
    return ModelDims(feature_dim=d, hidden=h,
                     num_classes=params["cls_w3"].shape[1] - 1, conv_width=kw)


# ---------------------------------------------------------------------------
# checkpoint container
#
# magic "SFCK", then uint32 little-endian header length, then a JSON
# header {version, dims, seed, config_hash, blocks: [{name, shape}]},
# then the raw float64 little-endian blocks in header order. JSON keys
# are sorted and floats never appear in the header, so identical
# parameters serialize to identical bytes.
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"SFCK"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Malformed or incompatible checkpoint file."""


def save_checkpoint(path, params: dict[str, np.ndarray], dims: ModelDims,
                    seed: int, config_hash: str) -> None:
    names = sorted(params)
    header = {
        "version": CHECKPOINT_VERSION,
        "dims": asdict(dims),
        "seed": int(seed),
        "config_hash": config_hash,
        "blocks": [{"name": n, "shape": list(params[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for n in names:
            f.write(np.ascontiguousarray(params[n], dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Returns (params, metadata). Raises CheckpointError on bad input."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    if len(raw) < 8:
        raise CheckpointError(f"{path}: truncated before header length")
    (hlen,) = struct.unpack_from("<I", raw, 4)
    if len(raw) < 8 + hlen:
        raise CheckpointError(f"{path}: truncated header (need {hlen} bytes at offset 8)")
    try:
        header = json.loads(raw[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: unparseable header at offset 8: {e}") from e
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {header.get('version')} "
            f"not supported (expected {CHECKPOINT_VERSION})")
    params = {}
    offset = 8 + hlen
    for block in header["blocks"]:
        shape = tuple(block["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(raw):
            raise CheckpointError(
                f"{path}: block '{block['name']}' truncated at offset {offset}")
        params[block["name"]] = np.frombuffer(
            raw, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes at offset {offset}")
    meta = {k: header[k] for k in ("dims", "seed", "config_hash")}
    return params, meta
