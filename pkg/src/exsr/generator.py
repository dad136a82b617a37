"""Super-resolution generator: trunk plus exemplar-fusion side path.

The trunk lifts the low-resolution input through ``num_res_blocks``
residual blocks and ``num_upsample_blocks`` sub-pixel x2 upsample blocks.
Fused exemplar features enter twice: the input-scale map is concatenated
before the first upsample block, the 2x map right after it. With
``num_exemplars == 0`` the side path is absent and the trunk runs alone.
"""

from __future__ import annotations

from typing import NamedTuple

import torch
from torch import nn

from .config import ModelConfig
from .errors import ConfigurationError, ShapeError
from .fusion import (ExemplarEncoder, GuideGenerator, Scale, WeightNet,
                     _norm_layer, fuse)
from .images import bicubic_upsample


class ResidualBlock(nn.Module):
    def __init__(self, channels: int, norm_kind: str):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1),
            _norm_layer(norm_kind, channels),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.body(x)


class UpsampleBlock(nn.Module):
    """x2 sub-pixel convolution block."""

    def __init__(self, channels: int, norm_kind: str):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels * 4, 3, padding=1),
            nn.PixelShuffle(2),
            _norm_layer(norm_kind, channels),
            nn.LeakyReLU(0.2, inplace=True),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)


class SRResult(NamedTuple):
    """super_resolve outputs: the SR image, the 2x guide, both weight maps."""

    sr: torch.Tensor
    guide_2x: torch.Tensor
    weights_lr: torch.Tensor | None
    weights_2x: torch.Tensor | None


class SuperResolver(nn.Module):
    """Full generator: trunk, exemplar encoder, weight nets, guide net."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        w, c = config.width, config.feat_channels
        self.uses_exemplars = config.num_exemplars > 0

        self.head = nn.Sequential(
            nn.Conv2d(3, w, 3, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
        )
        self.res_blocks = nn.Sequential(*[
            ResidualBlock(w, config.norm_kind) for _ in range(config.num_res_blocks)
        ])
        self.up_blocks = nn.ModuleList([
            UpsampleBlock(w, config.norm_kind)
            for _ in range(config.num_upsample_blocks)
        ])
        self.tail = nn.Conv2d(w, 3, 3, padding=1)

        self.guide_gen = GuideGenerator()
        if self.uses_exemplars:
            self.encoder = ExemplarEncoder(config)
            self.weight_net_lr = WeightNet(c)
            self.weight_net_2x = WeightNet(c)
            self.merge_lr = nn.Conv2d(w + c, w, 3, padding=1)
            self.merge_2x = nn.Conv2d(w + c, w, 3, padding=1)

    def exemplar_weights(self, features, guide) -> torch.Tensor:
        """Fusion weights for one scale; uniform when in average mode."""
        if self.config.fusion_mode == "average":
            n, k, _, h, w = features.data.shape
            return features.data.new_full((n, k, 1, h, w), 1.0 / k)
        net = self.weight_net_lr if features.scale is Scale.LR else self.weight_net_2x
        return net(features, guide)

    def forward(self, lr: torch.Tensor, exemplars: torch.Tensor | None) -> SRResult:
        cfg = self.config
        if lr.dim() != 4 or lr.shape[1:] != (3, cfg.lr_height, cfg.lr_width):
            raise ShapeError(
                f"input must be N x 3 x {cfg.lr_height} x {cfg.lr_width}, "
                f"got {tuple(lr.shape)}"
            )
        guide_2x = self.guide_gen(lr)

        weights_lr = weights_2x = None
        fused_lr = fused_2x = None
        if self.uses_exemplars:
            if exemplars is None:
                raise ConfigurationError("model was built with exemplars; none given")
            if exemplars.shape[1] != cfg.num_exemplars:
                raise ConfigurationError(
                    f"expected {cfg.num_exemplars} exemplars, got {exemplars.shape[1]}"
                )
            feats_lr, feats_2x = self.encoder(exemplars)
            weights_lr = self.exemplar_weights(feats_lr, lr)
            weights_2x = self.exemplar_weights(feats_2x, guide_2x)
            fused_lr = fuse(feats_lr.data, weights_lr).squeeze(1)
            fused_2x = fuse(feats_2x.data, weights_2x).squeeze(1)
        elif exemplars is not None and exemplars.shape[1] != 0:
            raise ConfigurationError("model was built without exemplars")

        x = self.head(lr)
        if fused_lr is not None:
            x = self.merge_lr(torch.cat([x, fused_lr], dim=1))
        x = self.res_blocks(x)
        x = self.up_blocks[0](x)
        if fused_2x is not None:
            x = self.merge_2x(torch.cat([x, fused_2x], dim=1))
        for block in self.up_blocks[1:]:
            x = block(x)
        # global skip: the trunk refines a plain bicubic enlargement
        base = bicubic_upsample(lr, (cfg.hr_height, cfg.hr_width))
        sr = torch.tanh(self.tail(x) + base)
        return SRResult(sr, guide_2x, weights_lr, weights_2x)

    def parameter_groups(self) -> dict[str, list[nn.Parameter]]:
        """Disjoint parameter groups: guide net, weight nets, everything else."""
        guide = list(self.guide_gen.parameters())
        weight_nets: list[nn.Parameter] = []
        if self.uses_exemplars:
            weight_nets = list(self.weight_net_lr.parameters()) + \
                list(self.weight_net_2x.parameters())
        taken = {id(p) for p in guide + weight_nets}
        main = [p for p in self.parameters() if id(p) not in taken]
        return {"guide": guide, "weight_nets": weight_nets, "main": main}


def build_generator(config: ModelConfig, seed: int = 0) -> SuperResolver:
    """Construct a generator with seed-reproducible initialization."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        model = SuperResolver(config)
    return model


def super_resolve(model: SuperResolver, lr: torch.Tensor,
                  exemplars: torch.Tensor | None) -> SRResult:
    """Run the generator without touching gradients or train-mode state."""
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            return model(lr, exemplars)
    finally:
        model.train(was_training)
