"""Image-quality metrics, the bicubic baseline, the K-vs-fusion ablation
grid, and weight-heatmap rendering.

PSNR and SSIM operate on [0, 1] tensors and return one value per image.
SSIM uses the standard 11x11 Gaussian window (sigma 1.5) with
C1 = 0.01^2, C2 = 0.03^2, computed per channel over valid window
positions and averaged over channels. Both metrics average RGB channels
rather than converting to luminance; reports record that choice.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ShapeError
from .images import bicubic_downsample, bicubic_upsample, to_unit

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def _check_pair(a: torch.Tensor, b: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    if a.dim() == 3:
        a, b = a.unsqueeze(0), b.unsqueeze(0)
    if a.dim() != 4:
        raise ShapeError(f"expected CHW or NCHW, got {tuple(a.shape)}")
    return a, b


def psnr(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Peak signal-to-noise ratio in dB per image, inputs in [0, 1].

    Capped at 99 dB (reached whenever MSE < 1e-10).
    """
    a, b = _check_pair(a, b)
    mse = (a.double() - b.double()).pow(2).mean(dim=(1, 2, 3))
    db = 10.0 * torch.log10(1.0 / mse.clamp_min(1e-12))
    return db.clamp_max(PSNR_CAP_DB)


def _gaussian_kernel(dtype: torch.dtype) -> torch.Tensor:
    half = (SSIM_WINDOW - 1) // 2
    coords = torch.arange(-half, half + 1, dtype=dtype)
    g = torch.exp(-(coords ** 2) / (2 * SSIM_SIGMA ** 2))
    g = g / g.sum()
    return torch.outer(g, g)


def ssim(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Mean local SSIM per image, inputs in [0, 1], channels averaged."""
    a, b = _check_pair(a, b)
    if min(a.shape[-2:]) < SSIM_WINDOW:
        raise ShapeError(
            f"image {tuple(a.shape[-2:])} smaller than the {SSIM_WINDOW}x"
            f"{SSIM_WINDOW} SSIM window"
        )
    a, b = a.double(), b.double()
    n, c = a.shape[:2]
    kernel = _gaussian_kernel(a.dtype).expand(c, 1, SSIM_WINDOW, SSIM_WINDOW)

    def win(x: torch.Tensor) -> torch.Tensor:
        return F.conv2d(x, kernel, groups=c)  # valid positions only

    mu_a, mu_b = win(a), win(b)
    var_a = win(a * a) - mu_a * mu_a
    var_b = win(b * b) - mu_b * mu_b
    cov = win(a * b) - mu_a * mu_b
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return (num / den).mean(dim=(1, 2, 3))


@dataclass
class MetricReport:
    """Per-image scores with aggregates for one method on one image set."""

    method: str
    ssim_values: list[float] = field(default_factory=list)
    psnr_values: list[float] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    color_space: str = "rgb-mean"

    @property
    def ssim_mean(self) -> float:
        return float(np.mean(self.ssim_values)) if self.ssim_values else math.nan

    @property
    def psnr_mean(self) -> float:
        return float(np.mean(self.psnr_values)) if self.psnr_values else math.nan

    @property
    def ssim_std(self) -> float:
        return float(np.std(self.ssim_values)) if self.ssim_values else math.nan

    @property
    def psnr_std(self) -> float:
        return float(np.std(self.psnr_values)) if self.psnr_values else math.nan

    def summary(self) -> dict:
        return {
            "method": self.method,
            "count": len(self.ssim_values),
            "ssim_mean": self.ssim_mean,
            "ssim_std": self.ssim_std,
            "psnr_mean": self.psnr_mean,
            "psnr_std": self.psnr_std,
            "color_space": self.color_space,
            "config": self.config,
        }

    def save(self, path: str | Path) -> None:
        """JSON by default; a .csv path writes a per-image delimited table."""
        path = Path(path)
        if path.suffix.lower() == ".csv":
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["index", "method", "ssim", "psnr_db"])
                for i, (s, p) in enumerate(zip(self.ssim_values,
                                               self.psnr_values)):
                    writer.writerow([i, self.method, s, p])
            return
        doc = self.summary()
        doc["ssim_values"] = self.ssim_values
        doc["psnr_values"] = self.psnr_values
        path.write_text(json.dumps(doc, indent=2))


def score_pair(sr: torch.Tensor, hr: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """(ssim, psnr) per image for [-1, 1] tensors."""
    a, b = to_unit(sr), to_unit(hr)
    return ssim(a, b), psnr(a, b)


def bicubic_baseline(manifest_path: str | Path, scale: int,
                     hr_size: int | None = None) -> MetricReport:
    """Score bicubic down+up against ground truth over a manifest's targets."""
    from .data import read_manifest
    from .images import load_image

    records = read_manifest(manifest_path)
    report = MetricReport(method=f"bicubic_x{scale}", config={"scale": scale})
    for rec in records:
        hr = load_image(rec.target_path, size=hr_size)
        lr = bicubic_downsample(hr, scale)
        up = bicubic_upsample(lr, hr.shape[-2:]).clamp(-1.0, 1.0)
        s, p = score_pair(up, hr)
        report.ssim_values.append(float(s[0]))
        report.psnr_values.append(float(p[0]))
    return report


# ---------------------------------------------------------------------------
# ablation grid

def run_ablation(base_config, index, out_dir: str | Path,
                 exemplar_counts=range(0, 6), fusion_modes=("average", "weighted"),
                 train_steps: int = 30, eval_images: int = 8,
                 seed: int = 0) -> list[dict]:
    """Train-then-eval every (K, fusion) cell; failures mark the cell absent.

    Writes ``ablation.csv`` and a chart-ready ``ablation.json`` under
    ``out_dir`` and returns the list of cell dicts.
    """
    import dataclasses

    from .config import TrainConfig
    from .data import make_eval_pairs
    from .training import TrainState, train

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells: list[dict] = []
    for mode in fusion_modes:
        for k in exemplar_counts:
            cell = {"fusion": mode, "k": int(k), "status": "ok",
                    "ssim": None, "psnr": None}
            try:
                cfg = dataclasses.replace(base_config, num_exemplars=int(k),
                                          fusion_mode=mode)
                tcfg = TrainConfig(steps=train_steps, use_critic=False,
                                   seed=seed, checkpoint_every=0, log_every=0,
                                   out_dir=str(out_dir / f"{mode}_k{k}"))
                state = TrainState.initialize(cfg, tcfg, seed=seed)
                train(state, index, tcfg)
                lr, hr, ex = make_eval_pairs(index, cfg, count=eval_images,
                                             seed=seed + 1)
                from .generator import super_resolve
                out = super_resolve(state.generator, lr,
                                    ex if int(k) > 0 else None)
                s, p = score_pair(out.sr, hr)
                cell["ssim"] = float(s.mean())
                cell["psnr"] = float(p.mean())
            except Exception as exc:  # keep the grid going
                cell["status"] = f"absent: {exc}"
            cells.append(cell)

    with open(out_dir / "ablation.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["fusion", "k", "status", "ssim", "psnr"])
        writer.writeheader()
        writer.writerows(cells)
    chart = {
        "x": sorted({c["k"] for c in cells}),
        "series": [
            {
                "name": mode,
                "ssim": [next((c["ssim"] for c in cells
                               if c["fusion"] == mode and c["k"] == k), None)
                         for k in sorted({c["k"] for c in cells})],
                "psnr": [next((c["psnr"] for c in cells
                               if c["fusion"] == mode and c["k"] == k), None)
                         for k in sorted({c["k"] for c in cells})],
            }
            for mode in fusion_modes
        ],
    }
    (out_dir / "ablation.json").write_text(json.dumps(chart, indent=2))
    return cells


# ---------------------------------------------------------------------------
# weight heatmaps

def render_weight_heatmap(weights: torch.Tensor,
                          exemplars: torch.Tensor,
                          alpha: float = 0.5) -> np.ndarray:
    """Jet-colored weight overlays, one per exemplar.

    ``weights`` is N x K x 1 x h x w (normalized), ``exemplars`` is
    N x K x 3 x H x W in [-1, 1]. Weights are nearest-upsampled so the
    blocky low-resolution structure stays visible, colored with the jet
    map (warmer = more weight) and alpha-blended onto each exemplar.
    Returns uint8 N x K x H x W x 3.
    """
    import matplotlib

    if weights.dim() != 5 or exemplars.dim() != 5:
        raise ShapeError("weights and exemplars must be 5-D")
    if weights.shape[:2] != exemplars.shape[:2]:
        raise ShapeError(
            f"exemplar count mismatch: weights {tuple(weights.shape)} vs "
            f"exemplars {tuple(exemplars.shape)}"
        )
    n, k = weights.shape[:2]
    hr = exemplars.shape[-2:]
    w_up = F.interpolate(weights.reshape(n * k, 1, *weights.shape[-2:]),
                         size=hr, mode="nearest")
    w_np = w_up.squeeze(1).clamp(0, 1).detach().cpu().numpy()
    jet = matplotlib.colormaps["jet"]
    colored = jet(w_np)[..., :3]  # (n*k, H, W, 3) in [0,1]
    ex_np = (to_unit(exemplars.reshape(n * k, 3, *hr))
             .permute(0, 2, 3, 1).detach().cpu().numpy())
    blended = (1 - alpha) * ex_np + alpha * colored
    out = (blended * 255.0).round().astype(np.uint8)
    return out.reshape(n, k, *hr, 3)
