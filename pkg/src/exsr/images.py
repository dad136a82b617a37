"""Image loading, value-range conversion, and the pinned bicubic resampler.

All in-memory images are float32 torch tensors in [-1, 1], laid out
N x 3 x H x W (or 3 x H x W for a single image). Conversion to and from
8-bit happens only at ingestion/emission boundaries.

The resampler is torch's bicubic kernel (cubic convolution, a = -0.75)
with anti-aliasing enabled when downsampling, so metric runs are
reproducible bit-for-bit on a given platform.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .errors import ShapeError


def to_unit(x: torch.Tensor) -> torch.Tensor:
    """[-1, 1] -> [0, 1], clamped."""
    return ((x + 1.0) * 0.5).clamp(0.0, 1.0)


def from_unit(x: torch.Tensor) -> torch.Tensor:
    """[0, 1] -> [-1, 1]."""
    return x * 2.0 - 1.0


def to_uint8(x: torch.Tensor) -> np.ndarray:
    """[-1, 1] CHW/NCHW tensor -> uint8 HWC/NHWC array."""
    u = (to_unit(x) * 255.0).round().to(torch.uint8).cpu().numpy()
    return np.moveaxis(u, -3, -1)


def from_uint8(arr: np.ndarray) -> torch.Tensor:
    """uint8 HWC/NHWC array -> float32 [-1, 1] CHW/NCHW tensor."""
    t = torch.from_numpy(np.ascontiguousarray(np.moveaxis(arr, -1, -3)))
    return from_unit(t.to(torch.float32) / 255.0)


def load_image(path: str | Path, size: int | None = None) -> torch.Tensor:
    """Decode an image file to a 3 x H x W tensor in [-1, 1].

    When ``size`` is given, the image is center-cropped to its largest
    square and resized to ``size`` x ``size`` (the fixed crop used for
    face corpora in this repo).
    """
    with Image.open(path) as img:
        img = img.convert("RGB")
        if size is not None:
            w, h = img.size
            s = min(w, h)
            left, top = (w - s) // 2, (h - s) // 2
            img = img.crop((left, top, left + s, top + s))
            if s != size:
                img = img.resize((size, size), Image.BICUBIC)
        arr = np.asarray(img, dtype=np.uint8)
    return from_uint8(arr)


def save_image(x: torch.Tensor, path: str | Path) -> None:
    """Write a 3 x H x W tensor in [-1, 1] as PNG/JPEG."""
    if x.dim() != 3:
        raise ShapeError(f"expected CHW tensor, got shape {tuple(x.shape)}")
    Image.fromarray(to_uint8(x)).save(path)


def encode_png(x: torch.Tensor) -> bytes:
    """PNG-encode a 3 x H x W tensor in [-1, 1]. Deterministic bytes."""
    import io

    buf = io.BytesIO()
    Image.fromarray(to_uint8(x)).save(buf, format="PNG")
    return buf.getvalue()


def decode_image_bytes(data: bytes) -> torch.Tensor:
    import io

    try:
        with Image.open(io.BytesIO(data)) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
    except Exception as exc:
        raise ValueError(f"undecodable image payload: {exc}") from exc
    return from_uint8(arr)


def _as_batch(x: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if x.dim() == 3:
        return x.unsqueeze(0), True
    if x.dim() == 4:
        return x, False
    raise ShapeError(f"expected CHW or NCHW tensor, got shape {tuple(x.shape)}")


def bicubic_downsample(x: torch.Tensor, factor: int) -> torch.Tensor:
    """Anti-aliased bicubic downsampling by an integer factor."""
    batched, squeeze = _as_batch(x)
    h, w = batched.shape[-2:]
    if factor < 1 or h % factor or w % factor:
        raise ShapeError(f"factor {factor} does not divide {h}x{w}")
    if factor == 1:
        out = batched.clone()
    else:
        out = F.interpolate(batched, size=(h // factor, w // factor),
                            mode="bicubic", antialias=True)
    return out.squeeze(0) if squeeze else out


def bicubic_upsample(x: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    """Bicubic upsampling to an explicit (H, W). No anti-alias filter."""
    batched, squeeze = _as_batch(x)
    out = F.interpolate(batched, size=size, mode="bicubic", antialias=False)
    return out.squeeze(0) if squeeze else out
