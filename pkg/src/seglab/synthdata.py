"""Deterministic synthetic segmentation datasets.

Two families stand in for cardiac-like and prostate-like data:

acdc_like (K = 3): each sample nests a disk (class 3) inside the hole of an
annulus (class 2), with a crescent (class 1, difference of two offset disks)
placed to the left with a guaranteed gap.  Intensities: disk -> 0.8,
annulus -> 0.5, crescent -> 0.65, background -> 0.2, so every adjacent pair
of classes is separated by at least 0.3.

promise_like (K = 1): a single axis-aligned ellipse at 0.7 over a 0.25
background.

Gaussian intensity noise (labels stay clean) is added and values clamped to
[0, 1].  Geometry is sampled in proportion to the grid, so on square images
the disk covers 1.8 - 4.5 % of the pixels, the annulus 2 - 8 %, and the
crescent 1 - 5.5 %.  Generation is fully determined by the spec seed; the
three splits draw from independent child seeds.

Export writes one 16-bit PGM per image, one per label-index map, and a JSON
manifest of ids per split.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .grid import ClassSet, GridShape, LabelMap
from .imgio import write_pgm16

__all__ = [
    "DatasetSpec",
    "Sample",
    "generate",
    "augment",
    "flip_rotate",
    "export_dataset",
    "ACDC_INTENSITIES",
    "PROMISE_INTENSITIES",
]

DATASET_KINDS = ("acdc_like", "promise_like")
SPLIT_NAMES = ("train", "val", "test")

ACDC_INTENSITIES = {0: 0.2, 1: 0.65, 2: 0.5, 3: 0.8}
PROMISE_INTENSITIES = {0: 0.25, 1: 0.7}

MAX_GEOMETRY_RETRIES = 50


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "acdc_like"
    image_size: tuple[int, int] = (64, 64)
    train: int = 500
    val: int = 50
    test: int = 100
    noise_sigma: float = 0.03
    seed: int | None = 0

    def __post_init__(self) -> None:
        if self.kind not in DATASET_KINDS:
            raise ValidationError(f"unknown dataset kind {self.kind!r}")
        size = tuple(int(d) for d in self.image_size)
        if len(size) != 2 or any(d < 1 for d in size):
            raise ValidationError(f"image_size must be two positive ints, got {self.image_size}")
        object.__setattr__(self, "image_size", size)
        if min(self.train, self.val, self.test) < 1:
            raise ValidationError("each split needs at least one sample")
        if self.noise_sigma < 0:
            raise ValidationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")

    @property
    def classes(self) -> ClassSet:
        return ClassSet(3 if self.kind == "acdc_like" else 1)


@dataclass(frozen=True, eq=False)
class Sample:
    image: np.ndarray  # (H, W) float64 in [0, 1], read-only
    label: LabelMap
    id: str

    def __post_init__(self) -> None:
        img = np.array(self.image, dtype=np.float64)
        if img.shape != self.label.shape.dims:
            raise ValidationError(f"image shape {img.shape} != label grid {self.label.shape.dims}")
        img.setflags(write=False)
        object.__setattr__(self, "image", img)


def _disk(yy: np.ndarray, xx: np.ndarray, cy: float, cx: float, r: float) -> np.ndarray:
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def _acdc_masks(rng: np.random.Generator, height: int, width: int) -> list[np.ndarray]:
    m = min(height, width)
    r_in = m * rng.uniform(0.075, 0.12)
    r_out = r_in + m * rng.uniform(0.04, 0.075)
    r_cres = m * rng.uniform(0.10, 0.16)
    gap = m * rng.uniform(0.016, 0.047)

    cx_low = 1.0 + r_out + gap + 2.0 * r_cres
    cx = rng.uniform(cx_low, width - 2.0 - r_out)
    cy = rng.uniform(r_out + 2.0, height - r_out - 2.0)
    cy_cres = float(np.clip(cy + m * rng.uniform(-0.047, 0.047), r_cres + 1.0, height - r_cres - 1.0))
    cx_cres = cx - (r_out + gap + r_cres)
    carve_r = r_cres * rng.uniform(0.65, 0.85)
    carve_cx = cx_cres + r_cres * rng.uniform(0.5, 0.75)

    yy, xx = np.mgrid[0:height, 0:width]
    disk = _disk(yy, xx, cy, cx, r_in)
    annulus = _disk(yy, xx, cy, cx, r_out) & ~disk
    crescent = _disk(yy, xx, cy_cres, cx_cres, r_cres) & ~_disk(yy, xx, cy_cres, carve_cx, carve_r)
    return [crescent, annulus, disk]  # classes 1, 2, 3


def _promise_masks(rng: np.random.Generator, height: int, width: int) -> list[np.ndarray]:
    m = min(height, width)
    ay = m * rng.uniform(0.094, 0.219)
    ax = m * rng.uniform(0.094, 0.219)
    cy = rng.uniform(ay + 2.0, height - ay - 2.0)
    cx = rng.uniform(ax + 2.0, width - ax - 2.0)
    yy, xx = np.mgrid[0:height, 0:width]
    ellipse = ((yy - cy) / ay) ** 2 + ((xx - cx) / ax) ** 2 <= 1.0
    return [ellipse]


def _make_sample(spec: DatasetSpec, rng: np.random.Generator, sample_id: str) -> Sample:
    height, width = spec.image_size
    intensities = ACDC_INTENSITIES if spec.kind == "acdc_like" else PROMISE_INTENSITIES
    for _ in range(MAX_GEOMETRY_RETRIES):
        masks = (
            _acdc_masks(rng, height, width)
            if spec.kind == "acdc_like"
            else _promise_masks(rng, height, width)
        )
        if all(mask.any() for mask in masks):
            break
    else:
        raise ValidationError(f"could not draw non-empty geometry for {sample_id}")

    idx = np.zeros((height, width), dtype=np.int64)
    image = np.full((height, width), intensities[0])
    for k, mask in enumerate(masks, start=1):
        idx[mask] = k
        image[mask] = intensities[k]
    if spec.noise_sigma > 0:
        image = image + rng.normal(0.0, spec.noise_sigma, size=image.shape)
        image = np.clip(image, 0.0, 1.0)

    label = LabelMap(
        GridShape((height, width)),
        spec.classes,
        _one_hot_planes(idx, spec.classes.total),
    )
    return Sample(image=image, label=label, id=sample_id)


def _one_hot_planes(idx: np.ndarray, total: int) -> np.ndarray:
    flat = idx.reshape(-1)
    planes = np.zeros((total, flat.size))
    planes[flat, np.arange(flat.size)] = 1.0
    return planes


def generate(spec: DatasetSpec) -> tuple[list[Sample], list[Sample], list[Sample]]:
    """Build the train/val/test splits, fully determined by spec.seed."""
    if spec.seed is None:
        raise ValidationError("dataset seed must be set before generation")
    min_dim = min(spec.image_size)
    if spec.kind == "acdc_like" and min_dim < 48:
        raise ValidationError(f"acdc_like needs images of at least 48x48, got {spec.image_size}")
    if spec.kind == "promise_like" and min_dim < 24:
        raise ValidationError(f"promise_like needs images of at least 24x24, got {spec.image_size}")

    children = np.random.SeedSequence(spec.seed).spawn(len(SPLIT_NAMES))
    splits = []
    for split, count, child in zip(SPLIT_NAMES, (spec.train, spec.val, spec.test), children):
        rng = np.random.default_rng(child)
        splits.append(
            [_make_sample(spec, rng, f"{spec.kind}-{split}-{i:04d}") for i in range(count)]
        )
    return splits[0], splits[1], splits[2]


def flip_rotate(arr: np.ndarray, hflip: bool, vflip: bool, quarter_turns: int) -> np.ndarray:
    """Apply flips then 90-degree rotations to the last two axes."""
    out = arr
    if hflip:
        out = np.flip(out, axis=-1)
    if vflip:
        out = np.flip(out, axis=-2)
    if quarter_turns % 4:
        out = np.rot90(out, k=quarter_turns % 4, axes=(-2, -1))
    return np.ascontiguousarray(out)


def augment(sample: Sample, seed: int) -> Sample:
    """Random flip/rotation applied identically to image and label.

    The draw is fully determined by the seed; the id is kept so augmented
    samples substitute for their originals within an epoch.
    """
    rng = np.random.default_rng(seed)
    hflip = bool(rng.random() < 0.5)
    vflip = bool(rng.random() < 0.5)
    quarter_turns = int(rng.integers(0, 4))
    image = flip_rotate(sample.image, hflip, vflip, quarter_turns)
    planes = flip_rotate(sample.label.planes(), hflip, vflip, quarter_turns)
    label = LabelMap(GridShape(image.shape), sample.label.classes, planes)
    return Sample(image=image, label=label, id=sample.id)


def export_dataset(
    train: list[Sample],
    val: list[Sample],
    test: list[Sample],
    spec: DatasetSpec,
    out_dir: str | Path,
) -> Path:
    """Write PGM images and label-index maps plus a JSON manifest."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    manifest = {
        "kind": spec.kind,
        "image_size": list(spec.image_size),
        "count_objects": spec.classes.count_objects,
        "noise_sigma": spec.noise_sigma,
        "seed": spec.seed,
        "splits": {},
    }
    for split, samples in zip(SPLIT_NAMES, (train, val, test)):
        ids = []
        for sample in samples:
            write_pgm16(out / "images" / f"{sample.id}.pgm", np.round(sample.image * 65535.0))
            write_pgm16(out / "labels" / f"{sample.id}.pgm", sample.label.class_indices())
            ids.append(sample.id)
        manifest["splits"][split] = ids
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return manifest_path
