"""Dataset ingestion, identity-disjoint splits, manifests, and batch sampling.

The on-disk layout is one directory per identity containing PNG/JPEG
images. Ingestion applies the per-kind rules: "celeba" targets 128 px
crops and drops identities with fewer than 5 images; "webface" targets
256 px, ranks images by a sharpness proxy (variance of the Laplacian
of the grayscale image), keeps the 10 best, and drops identities with
fewer than 10.

A training sample is (LR input, HR target, K exemplars). Exemplars come
from the target's identity, drawn without replacement and never including
the target itself, so the answer can never leak into the conditioning set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .config import ModelConfig
from .errors import ConfigurationError, IngestionError
from .images import bicubic_downsample, load_image

log = logging.getLogger(__name__)

KIND_RULES = {
    "celeba": {"hr_size": 128, "min_images": 5, "top_quality": None},
    "webface": {"hr_size": 256, "min_images": 10, "top_quality": 10},
    # webface's published split keeps the first 9121 of 10575 identities
    "celeba_fraction": 0.9,
    "webface_fraction": 9121 / 10575,
}

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


@dataclass
class ImageRecord:
    path: str
    width: int
    height: int
    quality: float = 0.0


@dataclass
class IdentityIndex:
    """identity -> image records, plus the ingestion rules that built it."""

    dataset_kind: str
    hr_size: int
    identities: dict[str, list[ImageRecord]] = field(default_factory=dict)

    @property
    def num_images(self) -> int:
        return sum(len(v) for v in self.identities.values())

    def subset(self, names: list[str]) -> "IdentityIndex":
        return IdentityIndex(self.dataset_kind, self.hr_size,
                             {n: self.identities[n] for n in names})


@dataclass
class SampleRecord:
    identity_id: str
    target_path: str
    exemplar_paths: list[str]
    split_tag: str


def _sharpness(path: Path) -> float:
    """Variance of the Laplacian of the grayscale image."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"), dtype=np.float64)
    lap = (-4 * arr
           + np.roll(arr, 1, 0) + np.roll(arr, -1, 0)
           + np.roll(arr, 1, 1) + np.roll(arr, -1, 1))
    return float(lap[1:-1, 1:-1].var())


def ingest(root_dir: str | Path, dataset_kind: str = "celeba",
           min_images: int = 0) -> IdentityIndex:
    """Build an IdentityIndex from a directory tree grouped by identity."""
    if dataset_kind not in ("celeba", "webface"):
        raise ConfigurationError(f"unknown dataset_kind {dataset_kind!r}")
    rules = KIND_RULES[dataset_kind]
    min_images = min_images or rules["min_images"]
    root = Path(root_dir)
    index = IdentityIndex(dataset_kind=dataset_kind, hr_size=rules["hr_size"])

    for ident_dir in sorted(p for p in root.iterdir() if p.is_dir()) if root.is_dir() else []:
        records: list[ImageRecord] = []
        seen: set[str] = set()
        for img_path in sorted(ident_dir.iterdir()):
            if img_path.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            key = str(img_path)
            if key in seen:
                continue
            try:
                with Image.open(img_path) as img:
                    w, h = img.size
                quality = _sharpness(img_path) if rules["top_quality"] else 0.0
            except Exception as exc:
                log.warning("skipping unreadable image %s: %s", img_path, exc)
                continue
            seen.add(key)
            records.append(ImageRecord(key, w, h, quality))
        if rules["top_quality"]:
            records.sort(key=lambda r: (-r.quality, r.path))
            records = records[: rules["top_quality"]]
            records.sort(key=lambda r: r.path)
        if len(records) >= min_images:
            index.identities[ident_dir.name] = records

    if not index.identities:
        raise IngestionError(f"no usable identities under {root}")
    return index


def make_splits(index: IdentityIndex, seed: int = 0,
                split_file: str | Path | None = None,
                train_fraction: float | None = None
                ) -> tuple[IdentityIndex, IdentityIndex]:
    """Identity-disjoint (train, test) indices.

    A published split file ("<identity> <train|test>" per line) wins when
    given. Otherwise celeba-kind shuffles identities with the seed and cuts
    at ``train_fraction``; webface-kind takes a deterministic sorted prefix
    at its published identity ratio.
    """
    names = sorted(index.identities)
    if len(names) < 2:
        raise IngestionError("need at least two identities to split")

    if split_file:
        tags: dict[str, str] = {}
        for line in Path(split_file).read_text().splitlines():
            if line.strip():
                ident, tag = line.split()
                tags[ident] = tag
        train = [n for n in names if tags.get(n, "train") == "train"]
        test = [n for n in names if tags.get(n) == "test"]
    elif index.dataset_kind == "webface":
        frac = train_fraction or KIND_RULES["webface_fraction"]
        cut = max(1, min(len(names) - 1, int(len(names) * frac)))
        train, test = names[:cut], names[cut:]
    else:
        frac = train_fraction or KIND_RULES["celeba_fraction"]
        order = list(names)
        np.random.default_rng(seed).shuffle(order)
        cut = max(1, min(len(names) - 1, int(len(order) * frac)))
        train, test = sorted(order[:cut]), sorted(order[cut:])

    if not train or not test:
        raise IngestionError("split produced an empty side")
    assert not set(train) & set(test)
    return index.subset(train), index.subset(test)


def downsample(image: torch.Tensor, factor: int) -> torch.Tensor:
    """Anti-aliased bicubic downsampling by an integer factor."""
    return bicubic_downsample(image, factor)


# ---------------------------------------------------------------------------
# manifests

def write_manifest(records: list[SampleRecord], path: str | Path) -> None:
    """One tab-separated record per line: split, identity, target, exemplars."""
    with open(path, "w") as fh:
        for r in records:
            fh.write("\t".join([r.split_tag, r.identity_id, r.target_path,
                                *r.exemplar_paths]) + "\n")


def read_manifest(path: str | Path) -> list[SampleRecord]:
    records = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        split_tag, identity, target, *exemplars = line.split("\t")
        records.append(SampleRecord(identity, target, exemplars, split_tag))
    return records


def make_manifest(index: IdentityIndex, split_tag: str, k: int,
                  seed: int = 0) -> list[SampleRecord]:
    """One record per eligible image, exemplars drawn from the same identity."""
    rng = np.random.default_rng(seed)
    records: list[SampleRecord] = []
    for ident in sorted(index.identities):
        recs = index.identities[ident]
        if len(recs) < k + 1:
            continue
        for target in recs:
            pool = [r.path for r in recs if r.path != target.path]
            chosen = list(rng.choice(pool, size=k, replace=False)) if k else []
            records.append(SampleRecord(ident, target.path, chosen, split_tag))
    return records


# ---------------------------------------------------------------------------
# batch sampling

def index_directory(root: str | Path, hr_size: int,
                    dataset_kind: str = "toy") -> IdentityIndex:
    """Index an identity-per-directory tree without the per-kind rules.

    For toy corpora and galleries whose size does not match a canonical
    dataset kind; every decodable image is kept.
    """
    root = Path(root)
    index = IdentityIndex(dataset_kind=dataset_kind, hr_size=hr_size)
    for ident_dir in sorted(p for p in root.iterdir() if p.is_dir()) if root.is_dir() else []:
        records = []
        for img_path in sorted(ident_dir.iterdir()):
            if img_path.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            try:
                with Image.open(img_path) as img:
                    w, h = img.size
            except Exception as exc:
                log.warning("skipping unreadable image %s: %s", img_path, exc)
                continue
            records.append(ImageRecord(str(img_path), w, h))
        if records:
            index.identities[ident_dir.name] = records
    if not index.identities:
        raise IngestionError(f"no usable identities under {root}")
    return index


def _rng_of(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def worker_rngs(master_seed: int, num_workers: int) -> list[np.random.Generator]:
    """Independent per-worker RNG streams derived from one master seed.

    Concurrent prefetch workers each take one stream; the spawn tree makes
    the streams non-overlapping and the whole set reproducible.
    """
    seq = np.random.SeedSequence(master_seed)
    return [np.random.default_rng(child) for child in seq.spawn(num_workers)]


def sample_records(index: IdentityIndex, k: int, n: int, seed_or_rng=0
                   ) -> list[SampleRecord]:
    """Draw n (target, K exemplars) records without touching pixel data.

    Identities with fewer than K+1 images are skipped; if none qualify the
    call fails. Exemplars come from the target's identity, drawn without
    replacement, never including the target.
    """
    rng = _rng_of(seed_or_rng)
    eligible = sorted(ident for ident, recs in index.identities.items()
                      if len(recs) >= k + 1)
    if not eligible:
        raise IngestionError(f"no identity has the {k + 1} images a sample needs")
    records = []
    for ident in rng.choice(eligible, size=n, replace=True):
        recs = index.identities[str(ident)]
        order = rng.permutation(len(recs))
        target, exemplars = recs[order[0]], [recs[i] for i in order[1:k + 1]]
        records.append(SampleRecord(str(ident), target.path,
                                    [e.path for e in exemplars], "train"))
    return records


def sample_batch(index: IdentityIndex, config: ModelConfig, seed_or_rng=0
                 ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, list[SampleRecord]]:
    """Draw (LR, HR, exemplars, records) for one batch.

    LR is the pinned bicubic downsample of HR.
    """
    if config.hr_height != index.hr_size or config.hr_width != index.hr_size:
        raise ConfigurationError(
            f"config target {config.hr_height} differs from corpus size "
            f"{index.hr_size}"
        )
    k = config.num_exemplars
    records = sample_records(index, k, config.batch_size, seed_or_rng)
    hrs, exes = [], []
    for rec in records:
        hrs.append(load_image(rec.target_path, size=index.hr_size))
        exes.append(torch.stack([load_image(p, size=index.hr_size)
                                 for p in rec.exemplar_paths]) if k
                    else torch.zeros(0, 3, index.hr_size, index.hr_size))
    hr = torch.stack(hrs)
    ex = torch.stack(exes)
    lr = bicubic_downsample(hr, config.scale_factor)
    return lr, hr, ex, records


def make_eval_pairs(index: IdentityIndex, config: ModelConfig, count: int,
                    seed: int = 0) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Deterministic (LR, HR, exemplars) stack for quick evaluations."""
    import dataclasses

    cfg = dataclasses.replace(config, batch_size=count)
    lr, hr, ex, _ = sample_batch(index, cfg, np.random.default_rng(seed))
    return lr, hr, ex


def batches(index: IdentityIndex, config: ModelConfig, rng: np.random.Generator):
    """Endless batch stream drawing from one RNG (checkpointable by state)."""
    while True:
        yield sample_batch(index, config, rng)
