"""Run configuration: model sizes, loss weights, optimizer settings, data paths.

The JSON config file mirrors these dataclass field names exactly, e.g.::

    {
      "model": {"l": 64, "d": 256, "p": 256, "k": 32, "dropout": 0.5},
      "loss": {"lambda_local": 2.0, "lambda_m": 2.0, "soft_label_sigma": 1.0, "epsilon": 1e-8},
      "attention_mode": "TA",
      "eval_mode": "GL",
      "fusion": "CM_LSTM",
      "optimizer": {"learning_rate": 0.001, "batch_size": 32, "epochs": 20, "seed": 0},
      "paths": {"features": "...", "annotations": "...", "embeddings": "...", "checkpoints": "..."}
    }
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError
from .validation import (
    ATTENTION_MODES,
    EVAL_MODES,
    FUSION_VARIANTS,
    check_choice,
    check_positive,
    check_unit_interval,
)

# Conv stack layers as (kernel, stride, filters) triples. Two profiles are
# provided: "activitynet" (2 conv layers for the global map, 2 for the score
# heads, 4 for the local map) and "charades" (4 layers everywhere).
StackSpec = tuple[tuple[int, int, int], ...]

_PROFILES: dict[str, dict[str, StackSpec]] = {
    "activitynet": {
        "global_stack": ((3, 1, 64), (3, 1, 1)),
        "head_stack": ((3, 1, 64), (3, 1, 3)),
        "local_stack": ((3, 1, 64), (3, 1, 64), (3, 1, 64), (3, 1, 1)),
    },
    "charades": {
        "global_stack": ((3, 1, 64), (3, 1, 64), (3, 1, 64), (3, 1, 1)),
        "head_stack": ((3, 1, 64), (3, 1, 64), (3, 1, 64), (3, 1, 3)),
        "local_stack": ((3, 1, 64), (3, 1, 64), (3, 1, 64), (3, 1, 1)),
    },
}


def default_stacks(profile: str = "activitynet") -> dict[str, StackSpec]:
    if profile not in _PROFILES:
        raise ConfigurationError(f"unknown stack profile {profile!r}")
    return dict(_PROFILES[profile])


def _as_stack(value, name: str) -> StackSpec:
    try:
        stack = tuple(tuple(int(v) for v in layer) for layer in value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{name}: expected a list of (kernel, stride, filters) triples") from exc
    if not stack:
        raise ConfigurationError(f"{name}: needs at least one layer")
    for i, layer in enumerate(stack):
        if len(layer) != 3:
            raise ConfigurationError(f"{name}[{i}]: expected 3 entries, got {len(layer)}")
        kernel, stride, filters = layer
        if kernel < 1 or kernel % 2 == 0:
            raise ConfigurationError(f"{name}[{i}]: kernel size must be odd and >= 1, got {kernel}")
        if stride != 1:
            raise ConfigurationError(f"{name}[{i}]: only stride 1 keeps the map size, got {stride}")
        if filters < 1:
            raise ConfigurationError(f"{name}[{i}]: filter count must be >= 1, got {filters}")
    return stack


@dataclass
class ModelConfig:
    """Network dimensions and the three conv stack layouts."""

    l: int = 64          # clips per video after interpolation
    d: int = 256         # common feature size of clip and sentence features
    p: int = 256         # recurrent hidden size
    k: int = 32          # attention hidden size
    dropout: float = 0.5
    global_stack: StackSpec | None = None
    head_stack: StackSpec | None = None
    local_stack: StackSpec | None = None
    share_stream_params: bool = False

    def __post_init__(self):
        for dim_name in ("l", "d", "p", "k"):
            if getattr(self, dim_name) < 1:
                raise ConfigurationError(f"model.{dim_name} must be >= 1")
        check_unit_interval(self.dropout, "model.dropout")
        defaults = default_stacks("activitynet")
        for stack_name in ("global_stack", "head_stack", "local_stack"):
            value = getattr(self, stack_name)
            if value is None:
                setattr(self, stack_name, defaults[stack_name])
            else:
                setattr(self, stack_name, _as_stack(value, f"model.{stack_name}"))
        if self.global_stack[-1][2] != 1:
            raise ConfigurationError("model.global_stack: final layer must have 1 filter")
        if self.head_stack[-1][2] != 3:
            raise ConfigurationError("model.head_stack: final layer must have 3 filters (start/end/momentness)")
        if self.local_stack[-1][2] != 1:
            raise ConfigurationError("model.local_stack: final layer must have 1 filter")


@dataclass
class LossConfig:
    lambda_local: float = 2.0
    lambda_m: float = 2.0
    soft_label_sigma: float = 1.0
    epsilon: float = 1e-8

    def __post_init__(self):
        check_positive(self.lambda_local, "loss.lambda_local")
        if self.lambda_m < 0:
            raise ConfigurationError("loss.lambda_m must be >= 0")
        if self.soft_label_sigma < 0:
            raise ConfigurationError("loss.soft_label_sigma must be >= 0")
        check_positive(self.epsilon, "loss.epsilon")


@dataclass
class OptimizerConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    epochs: int = 20
    seed: int = 0
    grad_clip: float | None = None

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigurationError("optimizer.learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ConfigurationError("optimizer.batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigurationError("optimizer.epochs must be >= 0")
        if self.grad_clip is not None:
            check_positive(self.grad_clip, "optimizer.grad_clip")


@dataclass
class PathsConfig:
    features: str = ""
    annotations: str = ""
    embeddings: str = ""
    checkpoints: str = ""


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    attention_mode: str = "TA"
    eval_mode: str = "GL"
    fusion: str = "CM_LSTM"
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def __post_init__(self):
        check_choice(self.attention_mode, ATTENTION_MODES, "attention_mode")
        check_choice(self.eval_mode, EVAL_MODES, "eval_mode")
        check_choice(self.fusion, FUSION_VARIANTS, "fusion")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("run config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown run config keys: {sorted(unknown)}")
        kwargs: dict = {}
        for name, sub_cls in (
            ("model", ModelConfig),
            ("loss", LossConfig),
            ("optimizer", OptimizerConfig),
            ("paths", PathsConfig),
        ):
            if name in data:
                section = data[name]
                if not isinstance(section, dict):
                    raise ConfigurationError(f"{name} section must be a JSON object")
                allowed = {f.name for f in dataclasses.fields(sub_cls)}
                extra = set(section) - allowed
                if extra:
                    raise ConfigurationError(f"unknown {name} config keys: {sorted(extra)}")
                kwargs[name] = sub_cls(**section)
        for name in ("attention_mode", "eval_mode", "fusion"):
            if name in data:
                kwargs[name] = data[name]
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        text = Path(path).read_text(encoding="utf-8")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
        return cls.from_dict(data)

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
