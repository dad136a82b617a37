"""HTTP inference service: super-resolution and exemplar-swap editing.

A loaded checkpoint plus a directory gallery of identity-labeled exemplar
images back four endpoints:

    GET  /api/health
    GET  /api/identities
    GET  /api/exemplars/{identity}          (and .../{identity}/{name} bytes)
    POST /api/superresolve

Model parameters are immutable after load; requests run through a single
lane lock. Inference runs in float64 by default, which makes outputs
byte-stable under exemplar permutation (weighted fusion is mathematically
permutation-invariant; double precision keeps the rounding below the
8-bit quantization step).
"""

from __future__ import annotations

import base64
import hashlib
import re
import threading
import time
from pathlib import Path

import torch
from fastapi import FastAPI, HTTPException
from fastapi.responses import Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import __version__
from .config import ModelConfig
from .data import IMAGE_SUFFIXES
from .errors import ConfigurationError
from .generator import SuperResolver, super_resolve
from .images import bicubic_downsample, decode_image_bytes, encode_png, from_uint8
from .metrics import render_weight_heatmap
from .training import read_checkpoint_header


class EditRequest(BaseModel):
    lr_image: str | None = None        # base64 PNG/JPEG at the model's LR size
    hr_image: str | None = None        # base64; will be auto-downsampled
    exemplar_refs: list[str] = Field(default_factory=list)  # "identity/name" or base64
    return_heatmaps: bool = False
    seed: int = 0


class ModelRunner:
    """Checkpointed generator plus gallery, shared by HTTP and CLI paths."""

    def __init__(self, checkpoint_path: str | Path, gallery_dir: str | Path | None,
                 expect_config: ModelConfig | None = None,
                 precision: str = "float64"):
        payload = read_checkpoint_header(checkpoint_path)
        self.config = ModelConfig(**payload["model_config"]).validate()
        if expect_config is not None and \
                expect_config.arch_fields() != self.config.arch_fields():
            raise ConfigurationError(
                "checkpoint does not match the requested model configuration")
        self.generator = SuperResolver(self.config)
        self.generator.load_state_dict(payload["generator"])
        self.dtype = torch.float64 if precision == "float64" else torch.float32
        self.generator.to(self.dtype).eval()
        for p in self.generator.parameters():
            p.requires_grad_(False)
        self.model_tag = hashlib.sha256(
            b"".join(t.detach().cpu().numpy().tobytes()
                     for _, t in sorted(payload["generator"].items()))
        ).hexdigest()[:12]
        self.gallery = self._index_gallery(Path(gallery_dir)) if gallery_dir else {}
        self._lane = threading.Lock()

    @staticmethod
    def _index_gallery(root: Path) -> dict[str, list[str]]:
        if not root.is_dir():
            raise ConfigurationError(f"gallery directory {root} does not exist")
        gallery = {}
        for ident_dir in sorted(p for p in root.iterdir() if p.is_dir()):
            names = sorted(p.name for p in ident_dir.iterdir()
                           if p.suffix.lower() in IMAGE_SUFFIXES)
            if names:
                gallery[ident_dir.name] = [str(ident_dir / n) for n in names]
        return gallery

    def gallery_listing(self) -> list[dict]:
        return [
            {"identity": ident, "count": len(paths),
             "thumbnail": f"/api/exemplars/{ident}/{Path(paths[0]).name}"}
            for ident, paths in sorted(self.gallery.items())
        ]

    _GALLERY_REF = re.compile(r"^[\w.-]{1,80}/[\w.-]{1,120}$")

    def resolve_exemplar_ref(self, ref: str) -> torch.Tensor:
        """Gallery "identity/name" reference or an inline base64 image.

        Short path-like strings are gallery references; anything else
        (including data: URIs) is decoded as base64 image bytes.
        """
        if ref.startswith("data:"):
            return self._load_hr(base64.b64decode(ref.split(",", 1)[1]))
        if self._GALLERY_REF.match(ref):
            ident, name = ref.split("/", 1)
            paths = self.gallery.get(ident)
            if paths is None:
                raise LookupError(f"unknown gallery identity {ident!r}")
            for p in paths:
                if Path(p).name == name:
                    return self._load_hr(Path(p).read_bytes())
            raise LookupError(f"unknown exemplar {ref!r}")
        try:
            raw = base64.b64decode(ref)
        except Exception as exc:
            raise ValueError(f"malformed exemplar reference: {exc}") from exc
        return self._load_hr(raw)

    def _load_hr(self, data: bytes) -> torch.Tensor:
        img = decode_image_bytes(data)
        if img.shape[-2:] != (self.config.hr_height, self.config.hr_width):
            raise ValueError(
                f"image must be {self.config.hr_height}x{self.config.hr_width}, "
                f"got {img.shape[-2]}x{img.shape[-1]}")
        return img

    def run(self, lr: torch.Tensor, exemplars: torch.Tensor, seed: int = 0):
        """Single-lane, gradient-free forward pass in the service dtype."""
        with self._lane:
            with torch.random.fork_rng():
                torch.manual_seed(seed)
                return super_resolve(self.generator, lr.to(self.dtype),
                                     exemplars.to(self.dtype))

    def edit(self, request: EditRequest) -> dict:
        """Validate, run, and package one edit request."""
        cfg = self.config
        t0 = time.monotonic()

        if bool(request.lr_image) == bool(request.hr_image):
            raise ValueError("provide exactly one of lr_image or hr_image")
        if len(request.exemplar_refs) != cfg.num_exemplars:
            raise ValueError(
                f"model expects {cfg.num_exemplars} exemplars, "
                f"got {len(request.exemplar_refs)}")

        if request.hr_image:
            hr = self._load_hr(base64.b64decode(request.hr_image))
            lr = bicubic_downsample(hr, cfg.scale_factor)
        else:
            lr = decode_image_bytes(base64.b64decode(request.lr_image))
            if lr.shape[-2:] != (cfg.lr_height, cfg.lr_width):
                raise ValueError(
                    f"lr_image must be {cfg.lr_height}x{cfg.lr_width}, "
                    f"got {lr.shape[-2]}x{lr.shape[-1]}")
        exemplars = torch.stack(
            [self.resolve_exemplar_ref(r) for r in request.exemplar_refs])

        out = self.run(lr.unsqueeze(0), exemplars.unsqueeze(0), seed=request.seed)
        sr_png = encode_png(out.sr[0].float())
        result = {
            "sr_image": base64.b64encode(sr_png).decode(),
            "sr_sha256": hashlib.sha256(sr_png).hexdigest(),
            "width": cfg.hr_width,
            "height": cfg.hr_height,
            "model": self.model_tag,
            "version": __version__,
            "latency_ms": (time.monotonic() - t0) * 1e3,
            "request": {
                "exemplar_refs": request.exemplar_refs,
                "return_heatmaps": request.return_heatmaps,
                "seed": request.seed,
                "scale": cfg.scale_factor,
            },
            "heatmaps": None,
        }
        if request.return_heatmaps:
            result["heatmaps"] = {
                tag: [
                    base64.b64encode(encode_png(
                        from_uint8(overlay).float())).decode()
                    for overlay in overlays[0]
                ]
                for tag, overlays in (
                    ("scale_lr", render_weight_heatmap(
                        out.weights_lr.float(), exemplars.unsqueeze(0).float())),
                    ("scale_2x", render_weight_heatmap(
                        out.weights_2x.float(), exemplars.unsqueeze(0).float())),
                )
            }
        return result


def create_app(runner: ModelRunner, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="exsr inference service")

    @app.get("/api/health")
    def health():
        return {
            "status": "ok",
            "model": runner.model_tag,
            "k": runner.config.num_exemplars,
            "scale": runner.config.scale_factor,
            "lr_size": [runner.config.lr_height, runner.config.lr_width],
            "hr_size": [runner.config.hr_height, runner.config.hr_width],
        }

    @app.get("/api/identities")
    def identities():
        return {"identities": runner.gallery_listing()}

    @app.get("/api/exemplars/{identity}")
    def exemplars(identity: str):
        paths = runner.gallery.get(identity)
        if paths is None:
            raise HTTPException(status_code=404, detail=f"unknown identity {identity!r}")
        return {"identity": identity,
                "images": [Path(p).name for p in paths]}

    @app.get("/api/exemplars/{identity}/{name}")
    def exemplar_bytes(identity: str, name: str):
        paths = runner.gallery.get(identity)
        if paths is None:
            raise HTTPException(status_code=404, detail=f"unknown identity {identity!r}")
        for p in paths:
            if Path(p).name == name:
                media = "image/png" if p.lower().endswith(".png") else "image/jpeg"
                return Response(content=Path(p).read_bytes(), media_type=media)
        raise HTTPException(status_code=404, detail=f"unknown exemplar {name!r}")

    @app.post("/api/superresolve")
    def superresolve(request: EditRequest):
        try:
            return runner.edit(request)
        except LookupError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except (ValueError, ConfigurationError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app


def serve(checkpoint_path: str | Path, gallery_dir: str | Path | None,
          host: str = "127.0.0.1", port: int = 8000,
          ui_dir: str | Path | None = None) -> None:
    """Load the checkpoint and block serving the HTTP API."""
    import uvicorn

    runner = ModelRunner(checkpoint_path, gallery_dir)
    uvicorn.run(create_app(runner, ui_dir=ui_dir), host=host, port=port)
