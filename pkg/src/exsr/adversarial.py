"""Critic network, frozen feature extractors, and all objective terms.

The critic is trained with the standard gradient-penalty Wasserstein
objective: minimize mean D(fake) - mean D(real) + w_gp * GP, where GP
pushes the critic's gradient norm toward one on random interpolates.
The generator's adversarial term is -mean D(fake).

The two perceptual terms compare images under frozen extractors that are
pluggable by name, so tests run fully offline ("flatten", "randconv:SEED")
while real training can load an exported network ("torchscript:PATH").
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig
from .errors import ConfigurationError, DependencyError, ShapeError


# ---------------------------------------------------------------------------
# feature extractors

class FeatureExtractor:
    """A named, frozen image-to-features map used by the perceptual terms."""

    def __init__(self, name: str, fn, input_size: int | None = None):
        self.name = name
        self._fn = fn
        self.input_size = input_size
        self.frozen = True

    def __call__(self, images: torch.Tensor) -> torch.Tensor:
        x = images
        if self.input_size is not None and x.shape[-2:] != (self.input_size,) * 2:
            x = F.interpolate(x, size=(self.input_size,) * 2,
                              mode="bilinear", align_corners=False)
        try:
            out = self._fn(x)
        except Exception as exc:  # surface extractor faults distinctly
            raise DependencyError(f"feature extractor {self.name!r} failed: {exc}") from exc
        return out.reshape(out.shape[0], -1)

    def parameters(self):
        return getattr(self._fn, "parameters", lambda: iter(()))()

    def double(self) -> "FeatureExtractor":
        """Cast the backing network (if any) to float64, for gradient checks."""
        if hasattr(self._fn, "double"):
            self._fn.double()
        return self


class _RandConv(nn.Module):
    """Fixed random conv features; magnitudes normalized to O(1) per sample."""

    def __init__(self, seed: int, channels: int = 32, depth: int = 3):
        super().__init__()
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            layers: list[nn.Module] = []
            cin = 3
            for _ in range(depth):
                layers += [nn.Conv2d(cin, channels, 3, stride=2, padding=1),
                           nn.LeakyReLU(0.2)]
                cin = channels
            self.net = nn.Sequential(*layers)
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = self.net(x)
        flat = feats.reshape(feats.shape[0], -1)
        return flat / (flat.shape[1] ** 0.5)


def get_extractor(name: str) -> FeatureExtractor:
    """Resolve an extractor spec: flatten | randconv[:seed] | torchscript:path."""
    if name == "flatten":
        return FeatureExtractor("flatten", lambda x: x.reshape(x.shape[0], -1))
    if name.startswith("randconv"):
        seed = int(name.split(":", 1)[1]) if ":" in name else 0
        return FeatureExtractor(name, _RandConv(seed))
    if name.startswith("torchscript:"):
        path = name.split(":", 1)[1]
        try:
            module = torch.jit.load(path).eval()
        except Exception as exc:
            raise DependencyError(f"cannot load torchscript extractor {path!r}: {exc}") from exc
        for p in module.parameters():
            p.requires_grad_(False)
        return FeatureExtractor(name, module)
    raise ConfigurationError(f"unknown feature extractor {name!r}")


# ---------------------------------------------------------------------------
# losses

@dataclass
class LossReport:
    """All loss components of one step, as plain floats for logging."""

    l_c: float = 0.0        # content, SR vs HR
    l_p: float = 0.0        # perceptual, SR vs HR
    l_adv: float = 0.0      # generator adversarial term
    l_c_s: float = 0.0      # content, guide vs downsampled HR
    l_p_s: float = 0.0      # perceptual, guide vs downsampled HR
    l_critic: float = 0.0   # critic objective (Wasserstein gap + penalty)
    l_gp: float = 0.0       # gradient penalty alone
    total_main: float = 0.0
    total_gs: float = 0.0


def content_loss(sr: torch.Tensor, hr: torch.Tensor) -> torch.Tensor:
    """Mean absolute per-element difference."""
    if sr.shape != hr.shape:
        raise ShapeError(f"shape mismatch {tuple(sr.shape)} vs {tuple(hr.shape)}")
    return (sr - hr).abs().mean()


def perceptual_loss(a: torch.Tensor, b: torch.Tensor,
                    phi_p: FeatureExtractor, phi_id: FeatureExtractor) -> torch.Tensor:
    """Sum of squared feature distances under both frozen extractors.

    Per extractor: the squared L2 norm of the per-sample feature difference,
    averaged over the batch.
    """
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    loss = a.new_zeros(())
    for phi in (phi_p, phi_id):
        d = phi(a) - phi(b)
        loss = loss + d.pow(2).sum(dim=1).mean()
    return loss


def gradient_penalty(critic, real: torch.Tensor, fake: torch.Tensor) -> torch.Tensor:
    """Mean squared deviation of the critic's gradient norm from 1.

    Evaluated at per-sample uniform interpolates between real and fake.
    """
    if real.shape != fake.shape:
        raise ShapeError(f"shape mismatch {tuple(real.shape)} vs {tuple(fake.shape)}")
    n = real.shape[0]
    eps = torch.rand(n, *([1] * (real.dim() - 1)), dtype=real.dtype, device=real.device)
    interp = (eps * real + (1.0 - eps) * fake).requires_grad_(True)
    scores = critic(interp)
    grads = torch.autograd.grad(
        outputs=scores.sum(), inputs=interp,
        create_graph=True, retain_graph=True, allow_unused=True,
    )[0]
    if grads is None:
        grads = torch.zeros_like(interp)
    norms = grads.reshape(n, -1).norm(dim=1)
    return ((norms - 1.0) ** 2).mean()


def critic_loss(critic, sr: torch.Tensor, hr: torch.Tensor,
                w_grad_penalty: float) -> tuple[torch.Tensor, torch.Tensor]:
    """Critic minimization objective and the penalty term it includes.

    Returns (mean D(sr) - mean D(hr) + w * GP, GP). ``sr`` must already be
    detached from the generator when used for a critic update.
    """
    if w_grad_penalty < 0:
        raise ConfigurationError("gradient-penalty coefficient must be >= 0")
    gp = gradient_penalty(critic, hr, sr)
    gap = critic(sr).mean() - critic(hr).mean()
    return gap + w_grad_penalty * gp, gp


def generator_adv_loss(critic, sr: torch.Tensor) -> torch.Tensor:
    """Negated mean critic score of the generated batch."""
    return -critic(sr).mean()


def total_loss(l_c: torch.Tensor, l_p: torch.Tensor, l_adv: torch.Tensor | None,
               l_c_s: torch.Tensor, l_p_s: torch.Tensor,
               config: ModelConfig) -> tuple[torch.Tensor, torch.Tensor]:
    """Bracketed totals: (main objective, guide-net objective).

    The main total updates every parameter except the guide net; the guide
    total updates only the guide net. ``l_adv=None`` is the critic-free mode.
    """
    total_main = l_c + config.w_perceptual * l_p
    if l_adv is not None:
        total_main = total_main + config.w_adversarial * l_adv
    total_gs = l_c_s + config.w_guide_perceptual * l_p_s
    return total_main, total_gs


# ---------------------------------------------------------------------------
# critic network

class Critic(nn.Module):
    """Strided conv critic mapping an HR image to one scalar score per sample."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        size = config.hr_height
        if size != config.hr_width:
            raise ConfigurationError("critic expects square inputs")
        w = config.critic_width
        layers: list[nn.Module] = [
            nn.Conv2d(3, w, 3, padding=1), nn.LeakyReLU(0.2, inplace=True)]
        while size > 4:
            w_next = min(w * 2, 256)
            layers += [nn.Conv2d(w, w_next, 4, stride=2, padding=1),
                       nn.LeakyReLU(0.2, inplace=True)]
            w, size = w_next, size // 2
        self.features = nn.Sequential(*layers)
        self.score = nn.Linear(w * size * size, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        f = self.features(x)
        return self.score(f.reshape(f.shape[0], -1)).squeeze(1)


def build_critic(config: ModelConfig, seed: int = 0) -> Critic:
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        critic = Critic(config)
    return critic
