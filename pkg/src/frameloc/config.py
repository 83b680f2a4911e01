"""Training configuration: defaults, key=value files, CLI overrides."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    # loss weights
    alpha: float = 1.0            # video-loss weight
    beta: float = 1.0             # actionness-loss weight
    eta: float = 5.0              # mined background frames per labeled frame
    # mining
    radius: int = 5               # anchor expansion reach, frames per side
    keep_ratio: float = 0.9       # expansion score floor relative to anchor
    scan_all: bool = False        # keep scanning past a rejected frame
    expanded_actionness: bool = True  # expanded frames count as actionness positives
    # inference
    segment_threshold: float = 0.65   # on class-prob + actionness, range [0, 2]
    video_threshold: float = 0.5
    topk_ratio: int = 8
    score_mode: str = "probability"
    gap_fill: int = 0
    interpolated_ap: bool = False
    # optimization
    lr: float = 1e-3
    batch_size: int = 32
    iterations: int = 500
    seed: int = 0
    # model
    hidden: int = 64
    conv_width: int = 3
    # supervision
    strategy: str = "uniform"
    # ablation ladder
    weak_only: bool = False       # video loss only
    use_background: bool = True   # mine + use pseudo background frames
    use_actionness: bool = True   # train the actionness head
    use_expansion: bool = True    # grow anchors into neighbors

    def validate(self) -> "TrainConfig":
        if min(self.alpha, self.beta, self.eta) < 0:
            raise ConfigError("alpha, beta, eta must be >= 0")
        if self.radius < 0:
            raise ConfigError("radius must be >= 0")
        if not 0 < self.keep_ratio <= 1:
            raise ConfigError(f"keep_ratio must be in (0, 1], got {self.keep_ratio}")
        if self.batch_size < 1 or self.iterations < 0:
            raise ConfigError("batch_size must be >= 1 and iterations >= 0")
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.hidden < 1 or self.conv_width < 1 or self.conv_width % 2 == 0:
            raise ConfigError("hidden must be >= 1 and conv_width odd >= 1")
        if self.topk_ratio < 1:
            raise ConfigError("topk_ratio must be >= 1")
        if self.strategy not in ("uniform", "gaussian_mid", "human_like"):
            raise ConfigError(f"unknown annotation strategy {self.strategy!r}")
        if self.score_mode not in ("probability", "logit"):
            raise ConfigError(f"unknown score_mode {self.score_mode!r}")
        if self.gap_fill < 0:
            raise ConfigError("gap_fill must be >= 0")
        return self


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(fields: dict[str, str], name: str, raw: str):
    if name not in fields:
        raise ConfigError(f"unknown config key {name!r}")
    kind = fields[name]
    raw = raw.strip()
    if kind == "bool":
        low = raw.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as e:
        raise ConfigError(f"{name}: {e}") from e
    return raw


def parse_kv_text(text: str, base):
    """Fill any dataclass from 'key = value' lines.

    '#' starts a comment, blank lines are ignored, unknown keys raise
    ConfigError. Returns a new instance; base is untouched.
    """
    fields = {f.name: f.type for f in dataclasses.fields(base)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        values[key.strip()] = _coerce(fields, key.strip(), raw)
    return dataclasses.replace(base, **values)


def parse_config_text(text: str, base: TrainConfig | None = None) -> TrainConfig:
    return parse_kv_text(text, base or TrainConfig()).validate()


def load_config(path, base: TrainConfig | None = None) -> TrainConfig:
    with open(path) as f:
        return parse_config_text(f.read(), base)


def apply_overrides(cfg, pairs: list[str]):
    """Apply CLI 'key=value' strings on top of a config-style dataclass."""
    fields = {f.name: f.type for f in dataclasses.fields(cfg)}
    values = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override must look like key=value, got {pair!r}")
        key, _, raw = pair.partition("=")
        values[key.strip()] = _coerce(fields, key.strip(), raw)
    out = dataclasses.replace(cfg, **values)
    if hasattr(out, "validate"):
        out.validate()
    return out


def config_hash(cfg: TrainConfig) -> str:
    """Stable short digest of every field, for checkpoint provenance."""
    blob = json.dumps(dataclasses.asdict(cfg), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]
