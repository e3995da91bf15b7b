"""Declarative run configuration: defaults, YAML files, flag overrides.

Precedence is flags > file > defaults. Unknown keys anywhere in the tree are
rejected with their full dotted path. The effective config is printed at
command startup and serialized into run outputs for provenance.
"""

import dataclasses
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError


@dataclass
class ModelSection:
    base_channels: int = 32
    channel_mults: list = field(default_factory=lambda: [1, 2, 2])
    res_blocks: int = 1
    attention_levels: list = field(default_factory=list)
    middle_attention: bool = True
    gfm_levels: list = field(default_factory=lambda: [0, 1, 2])
    fusion_mode: str = "sum"              # sum | residual
    guidance: str = "full"                # full | no-mask | no-scmap | none
    fusion_hidden: int = 64
    embed_channels: int = 128
    embed_hidden: int = 256
    use_control: bool = True
    max_text_tokens: int = 16


@dataclass
class ScheduleSection:
    t_train: int = 1000
    sample_steps: int = 50
    beta_min: float = 1e-4
    beta_max: float = 0.02


@dataclass
class DegradationSection:
    blur_sigma: list = field(default_factory=lambda: [0.2, 2.0])
    resize_modes: dict = field(default_factory=lambda: {"bicubic": 0.7, "bilinear": 0.2, "nearest": 0.1})
    noise_sigma: list = field(default_factory=lambda: [1.0, 15.0])
    jpeg_quality: list = field(default_factory=lambda: [60, 95])
    scale: int = 4


@dataclass
class PromptingSection:
    source: str = "labels"                # labels | tags
    tag_file: str | None = None
    min_area_fraction: float = 0.0


@dataclass
class SegmenterSection:
    kind: str = "toy"                     # toy | oracle | external
    num_bands: int = 4
    mask_dir: str | None = None           # oracle backend
    command: str | None = None            # external backend


@dataclass
class TextEncoderSection:
    kind: str = "hash"
    dim: int = 1024
    seed: int = 0


@dataclass
class LREncoderSection:
    kind: str = "conv-stub"
    dim: int = 256
    seed: int = 0


@dataclass
class BackendsSection:
    segmenter: SegmenterSection = field(default_factory=SegmenterSection)
    text_encoder: TextEncoderSection = field(default_factory=TextEncoderSection)
    lr_encoder: LREncoderSection = field(default_factory=LREncoderSection)


@dataclass
class TrainingSection:
    steps: int = 2000
    batch_size: int = 4
    lr: float = 5e-5
    weight_decay: float = 1e-2
    checkpoint_every: int = 0
    log_every: int = 10


@dataclass
class SamplingSection:
    clip_denoised: bool = False
    guidance_weight: float = 1.0


@dataclass
class RunConfig:
    seed: int = 0
    model: ModelSection = field(default_factory=ModelSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    degradation: DegradationSection = field(default_factory=DegradationSection)
    prompting: PromptingSection = field(default_factory=PromptingSection)
    backends: BackendsSection = field(default_factory=BackendsSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    sampling: SamplingSection = field(default_factory=SamplingSection)

    def validate(self) -> None:
        if self.prompting.source not in ("labels", "tags"):
            raise ConfigError(f"prompting.source must be labels|tags, got {self.prompting.source!r}")
        if self.prompting.source == "tags" and not self.prompting.tag_file:
            raise ConfigError("prompting.source=tags requires prompting.tag_file")
        if self.model.guidance not in ("full", "no-mask", "no-scmap", "none"):
            raise ConfigError(f"invalid model.guidance {self.model.guidance!r}")
        if self.model.fusion_mode not in ("sum", "residual"):
            raise ConfigError(f"invalid model.fusion_mode {self.model.fusion_mode!r}")
        if self.backends.segmenter.kind not in ("toy", "oracle", "external"):
            raise ConfigError(f"invalid backends.segmenter.kind {self.backends.segmenter.kind!r}")
        if self.backends.segmenter.kind == "oracle" and not self.backends.segmenter.mask_dir:
            raise ConfigError("oracle segmenter requires backends.segmenter.mask_dir")
        if self.backends.segmenter.kind == "external" and not self.backends.segmenter.command:
            raise ConfigError("external segmenter requires backends.segmenter.command")


def _from_dict(cls, data: dict, prefix: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(f"config section {prefix or '<root>'} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key: {prefix}{key}")
        ftype = known[key].type
        if dataclasses.is_dataclass(ftype) and isinstance(value, dict):
            kwargs[key] = _from_dict(ftype, value, f"{prefix}{key}.")
        else:
            kwargs[key] = value
    return cls(**kwargs)


def to_dict(config) -> dict:
    return dataclasses.asdict(config)


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _apply_override(tree: dict, spec: str) -> None:
    if "=" not in spec:
        raise ConfigError(f"override must look like section.key=value, got {spec!r}")
    path, raw = spec.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override value {raw!r}: {exc}") from None
    keys = path.strip().split(".")
    node = tree
    for key in keys[:-1]:
        if key not in node or not isinstance(node[key], dict):
            raise ConfigError(f"unknown config key: {path}")
        node = node[key]
    if keys[-1] not in node:
        raise ConfigError(f"unknown config key: {path}")
    node[keys[-1]] = value


def load_config(path=None, overrides=()) -> RunConfig:
    """Defaults, overlaid by an optional YAML file, overlaid by overrides."""
    tree = to_dict(RunConfig())
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        tree = _deep_merge(tree, loaded)
    for spec in overrides:
        _apply_override(tree, spec)
    config = _from_dict(RunConfig, tree)
    config.validate()
    return config


def dump_config(config: RunConfig) -> str:
    return yaml.safe_dump(to_dict(config), sort_keys=True, default_flow_style=False)
