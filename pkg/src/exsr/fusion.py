"""Pixel-wise weighted fusion of exemplar features.

A shared encoder maps each high-resolution exemplar to feature maps at
two spatial scales: the input resolution and twice the input resolution.
Per scale, a weight network scores every pixel of every exemplar against
a guide image (the raw input at 1x, a learned 2x reconstruction at 2x).
Scores pass through softplus so they are strictly non-negative, then are
L1-normalized across exemplars; the fused map is the resulting convex
combination of the per-exemplar features.

Weight networks share parameters across exemplars, which makes the whole
path equivariant under exemplar permutation by construction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig
from .errors import ConfigurationError, ShapeError


class Scale(enum.Enum):
    """Which of the two fusion scales a feature stack lives at."""

    LR = "lr"    # h x w equal to the low-resolution input
    X2 = "2x"    # twice the low-resolution input


@dataclass
class ExemplarFeatures:
    """Encoded exemplar maps, N x K x C x h x w, tagged with their scale."""

    data: torch.Tensor
    scale: Scale

    def __post_init__(self):
        if self.data.dim() != 5:
            raise ShapeError(
                f"exemplar features must be NKChw, got {tuple(self.data.shape)}"
            )

    @property
    def num_exemplars(self) -> int:
        return self.data.shape[1]


def normalize_weights(scores: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    """L1-normalize non-negative per-exemplar scores along dim 1.

    ``scores`` is N x K x 1 x h x w with every entry >= 0. Pixels where all
    K scores vanish fall back to the uniform weight 1/K, so the output
    always sums to one across exemplars.
    """
    if scores.dim() != 5 or scores.shape[2] != 1:
        raise ShapeError(f"scores must be N x K x 1 x h x w, got {tuple(scores.shape)}")
    k = scores.shape[1]
    total = scores.sum(dim=1, keepdim=True)
    uniform = scores.new_full(scores.shape, 1.0 / k)
    return torch.where(total > eps, scores / total.clamp_min(eps), uniform)


def fuse(features: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    """Weighted sum of exemplar features across the exemplar dimension.

    features: N x K x C x h x w, weights: N x K x 1 x h x w (normalized).
    Returns N x 1 x C x h x w.
    """
    if features.dim() != 5 or weights.dim() != 5:
        raise ShapeError("fuse expects 5-D feature and weight tensors")
    if (features.shape[0], features.shape[1]) != (weights.shape[0], weights.shape[1]) \
            or features.shape[-2:] != weights.shape[-2:]:
        raise ShapeError(
            f"feature/weight shapes do not align: {tuple(features.shape)} "
            f"vs {tuple(weights.shape)}"
        )
    return (features * weights).sum(dim=1, keepdim=True)


def _norm_layer(kind: str, channels: int) -> nn.Module:
    if kind == "none":
        return nn.Identity()
    if kind == "instance":
        return nn.InstanceNorm2d(channels, affine=True)
    if kind == "batch":
        return nn.BatchNorm2d(channels)
    raise ConfigurationError(f"unknown norm_kind {kind!r}")


class ExemplarEncoder(nn.Module):
    """Strided conv encoder shared across exemplars, with taps at 2x and 1x.

    Input exemplars are at the target high resolution; the stack halves the
    spatial size ``num_upsample_blocks`` times, emitting feature maps when
    it reaches twice the input resolution and the input resolution itself.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c = config.feat_channels
        self.stem = nn.Sequential(
            nn.Conv2d(3, c, 3, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
        )
        stages = []
        for _ in range(config.num_upsample_blocks):
            stages.append(nn.Sequential(
                nn.Conv2d(c, c, 3, stride=2, padding=1),
                _norm_layer(config.norm_kind, c),
                nn.LeakyReLU(0.2, inplace=True),
            ))
        self.stages = nn.ModuleList(stages)
        self.tap_2x = nn.Conv2d(c, c, 3, padding=1)
        self.tap_lr = nn.Conv2d(c, c, 3, padding=1)

    def forward(self, exemplars: torch.Tensor) -> tuple[ExemplarFeatures, ExemplarFeatures]:
        """N x K x 3 x H x W exemplars -> features at Scale.LR and Scale.X2."""
        if exemplars.dim() != 5:
            raise ShapeError(f"exemplars must be NK3HW, got {tuple(exemplars.shape)}")
        n, k = exemplars.shape[:2]
        cfg = self.config
        if exemplars.shape[2:] != (3, cfg.hr_height, cfg.hr_width):
            raise ConfigurationError(
                f"exemplar resolution {tuple(exemplars.shape[2:])} does not match "
                f"configured target 3x{cfg.hr_height}x{cfg.hr_width}"
            )
        if k < 1:
            raise ConfigurationError("need at least one exemplar to encode")
        x = self.stem(exemplars.reshape(n * k, *exemplars.shape[2:]))
        # the 2x tap sits one halving before the last; with a single stage
        # that is the stem output itself
        feat_2x = self.tap_2x(x) if len(self.stages) == 1 else None
        for i, stage in enumerate(self.stages):
            x = stage(x)
            if i == len(self.stages) - 2:
                feat_2x = self.tap_2x(x)
        feat_lr = self.tap_lr(x)

        def pack(t: torch.Tensor, scale: Scale) -> ExemplarFeatures:
            return ExemplarFeatures(t.reshape(n, k, *t.shape[1:]), scale)

        return pack(feat_lr, Scale.LR), pack(feat_2x, Scale.X2)


class WeightNet(nn.Module):
    """Per-pixel, per-exemplar score network for one fusion scale.

    The guide image is channel-concatenated with each exemplar's feature
    slice and pushed through a small conv stack emitting one scalar map per
    exemplar; the same parameters serve every exemplar. Softplus keeps raw
    scores non-negative before L1 normalization.
    """

    def __init__(self, feat_channels: int, hidden: int = 32):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(feat_channels + 3, hidden, 3, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(hidden, hidden, 3, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(hidden, 1, 3, padding=1),
        )

    def scores(self, features: ExemplarFeatures, guide: torch.Tensor) -> torch.Tensor:
        """Raw non-negative scores, N x K x 1 x h x w."""
        data = features.data
        n, k, c, h, w = data.shape
        if guide.shape[0] != n or guide.shape[-2:] != (h, w):
            raise ShapeError(
                f"guide {tuple(guide.shape)} does not match features "
                f"{tuple(data.shape)} spatially"
            )
        stacked = torch.cat(
            [data, guide.unsqueeze(1).expand(n, k, *guide.shape[1:])], dim=2
        )
        raw = self.net(stacked.reshape(n * k, c + 3, h, w))
        return F.softplus(raw).reshape(n, k, 1, h, w)

    def forward(self, features: ExemplarFeatures, guide: torch.Tensor) -> torch.Tensor:
        """Normalized weight map, N x K x 1 x h x w (sums to 1 over K)."""
        return normalize_weights(self.scores(features, guide))


class GuideGenerator(nn.Module):
    """Small network producing the 2x guide image from the raw input.

    Output is a 3-channel image at twice the input resolution, tanh-bounded
    to the [-1, 1] image range. It is supervised directly against the
    downsampled ground truth and feeds the second weight network.
    """

    def __init__(self, hidden: int = 32):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(3, hidden, 3, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(hidden, hidden, 3, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(hidden, 3 * 4, 3, padding=1),
            nn.PixelShuffle(2),
        )

    def forward(self, lr_image: torch.Tensor) -> torch.Tensor:
        if lr_image.dim() != 4 or lr_image.shape[1] != 3:
            raise ShapeError(f"expected N x 3 x h x w input, got {tuple(lr_image.shape)}")
        return torch.tanh(self.net(lr_image))
