"""Configuration dataclasses and YAML round-trip helpers.

A run is described by three blocks: ``model`` (architecture and loss
coefficients), ``data`` (corpus location and sampling) and ``train``
(optimization loop). The YAML layout mirrors the dataclass fields.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigurationError


@dataclass
class ModelConfig:
    """Architecture and objective hyperparameters.

    ``scale_factor`` must equal ``2 ** num_upsample_blocks``; the standard
    presets are x8 (three upsample blocks) and x16 (four).
    """

    scale_factor: int = 8
    num_upsample_blocks: int = 3
    num_res_blocks: int = 1
    num_weight_nets: int = 2   # one per fusion scale; the architecture is two-scale
    num_exemplars: int = 3
    batch_size: int = 8
    lr_height: int = 16
    lr_width: int = 16
    feat_channels: int = 64        # exemplar feature channels
    width: int = 64                # trunk channel width
    critic_width: int = 32
    norm_kind: str = "instance"    # none | instance | batch
    fusion_mode: str = "weighted"  # weighted | average
    # loss coefficients
    w_perceptual: float = 1.0
    w_adversarial: float = 0.01
    w_guide_perceptual: float = 1.0
    w_grad_penalty: float = 10.0
    # optimizer
    lr_main: float = 0.003
    lr_weight_nets: float = 0.0001
    adam_beta1: float = 0.0
    adam_beta2: float = 0.99
    # frozen feature extractors for the perceptual terms
    perceptual_extractor: str = "randconv:11"
    identity_extractor: str = "randconv:23"

    @property
    def hr_height(self) -> int:
        return self.lr_height * self.scale_factor

    @property
    def hr_width(self) -> int:
        return self.lr_width * self.scale_factor

    @property
    def guide_height(self) -> int:
        return 2 * self.lr_height

    @property
    def guide_width(self) -> int:
        return 2 * self.lr_width

    def validate(self) -> "ModelConfig":
        if self.scale_factor != 2 ** self.num_upsample_blocks:
            raise ConfigurationError(
                f"scale_factor {self.scale_factor} inconsistent with "
                f"{self.num_upsample_blocks} upsample blocks "
                f"(expected {2 ** self.num_upsample_blocks})"
            )
        if self.num_upsample_blocks < 1 or self.num_res_blocks < 0:
            raise ConfigurationError("block counts out of range")
        if self.num_weight_nets != 2:
            raise ConfigurationError(
                "the fusion path is two-scale; num_weight_nets must be 2")
        if self.num_exemplars < 0:
            raise ConfigurationError("num_exemplars must be >= 0")
        if self.lr_height < 1 or self.lr_width < 1:
            raise ConfigurationError("input resolution must be positive")
        if self.w_grad_penalty < 0:
            raise ConfigurationError("w_grad_penalty must be >= 0")
        if self.norm_kind not in ("none", "instance", "batch"):
            raise ConfigurationError(f"unknown norm_kind {self.norm_kind!r}")
        if self.fusion_mode not in ("weighted", "average"):
            raise ConfigurationError(f"unknown fusion_mode {self.fusion_mode!r}")
        return self

    def arch_fields(self) -> dict:
        """Fields that must match for a checkpoint to load."""
        keys = (
            "scale_factor", "num_upsample_blocks", "num_res_blocks",
            "num_exemplars", "lr_height", "lr_width", "feat_channels",
            "width", "critic_width", "norm_kind", "fusion_mode",
        )
        return {k: getattr(self, k) for k in keys}


@dataclass
class DataConfig:
    """Corpus location and sampling parameters."""

    root_dir: str = "data/faces"
    dataset_kind: str = "celeba"   # celeba | webface
    min_images: int = 0            # 0 -> kind default (5 celeba, 10 webface)
    seed: int = 0
    split_file: str = ""           # optional published identity->split list
    train_fraction: float = 0.9    # celeba fallback split ratio


@dataclass
class TrainConfig:
    """Optimization loop parameters."""

    steps: int = 20000
    n_critic: int = 1
    use_critic: bool = True
    seed: int = 0
    checkpoint_every: int = 1000
    log_every: int = 50
    out_dir: str = "runs/default"
    lr_decay: bool = False         # optional linear decay to zero over `steps`


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)


def _from_mapping(cls, mapping: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(mapping) - names
    if unknown:
        raise ConfigurationError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**mapping)


def load_config(path: str | Path) -> RunConfig:
    """Load a nested YAML document into a RunConfig."""
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    cfg = RunConfig(
        model=_from_mapping(ModelConfig, raw.get("model", {})),
        data=_from_mapping(DataConfig, raw.get("data", {})),
        train=_from_mapping(TrainConfig, raw.get("train", {})),
    )
    cfg.model.validate()
    return cfg


def save_config(cfg: RunConfig, path: str | Path) -> None:
    doc = {
        "model": dataclasses.asdict(cfg.model),
        "data": dataclasses.asdict(cfg.data),
        "train": dataclasses.asdict(cfg.train),
    }
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def preset(name: str) -> ModelConfig:
    """Standard resolutions: celeba_x8/x16 (128px targets), webface_x8/x16 (256px)."""
    presets = {
        "celeba_x8": ModelConfig(scale_factor=8, num_upsample_blocks=3,
                                 lr_height=16, lr_width=16, batch_size=8),
        "celeba_x16": ModelConfig(scale_factor=16, num_upsample_blocks=4,
                                  lr_height=8, lr_width=8, batch_size=8),
        "webface_x8": ModelConfig(scale_factor=8, num_upsample_blocks=3,
                                  lr_height=32, lr_width=32, batch_size=4),
        "webface_x16": ModelConfig(scale_factor=16, num_upsample_blocks=4,
                                   lr_height=16, lr_width=16, batch_size=4),
    }
    try:
        return presets[name]
    except KeyError:
        raise ConfigurationError(f"unknown preset {name!r}") from None
