"""Synthetic labeled bags on the unit sphere.

Each class gets an orthonormal direction; each slide mixes "informative"
patches scattered around its class direction with isotropic background
noise, all unit-normalized. This creates exactly the contrast text-guided
patch selection exploits, at desk scale, with no external model or data.

One PCG64 stream drives a whole dataset in a fixed draw order (class
directions, then per slide: patch count, informative block, background
block), so generation is byte-reproducible per seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .embedstore import DatasetManifest, SlideBag, SlideRecord, PatchMatrix, TextClassifier
from .errors import InvalidConfig


@dataclass(frozen=True)
class SynthConfig:
    """Shape and difficulty knobs for one generated dataset.

    `informative_fraction` is the share of patches per slide drawn around
    the class direction; `noise_scale` is the Gaussian scale added to the
    direction before re-normalization (0 puts informative patches exactly on
    the direction). Patch counts are drawn uniformly from
    [patches_min, patches_max].
    """

    num_classes: int
    dim: int
    slides_per_class: int
    patches_min: int
    patches_max: int
    informative_fraction: float
    noise_scale: float
    seed: int

    def __post_init__(self):
        if self.num_classes < 2:
            raise InvalidConfig(f"need >= 2 classes, got {self.num_classes}")
        if self.dim < 2:
            raise InvalidConfig(f"need dim >= 2, got {self.dim}")
        if self.num_classes > self.dim:
            raise InvalidConfig(
                f"{self.num_classes} classes cannot be orthogonal in dim {self.dim}"
            )
        if self.slides_per_class < 1:
            raise InvalidConfig("need at least one slide per class")
        if not 1 <= self.patches_min <= self.patches_max:
            raise InvalidConfig(
                f"bad patch range [{self.patches_min}, {self.patches_max}]"
            )
        if not 0.0 <= self.informative_fraction <= 1.0:
            raise InvalidConfig(
                f"informative_fraction must be in [0, 1], got {self.informative_fraction}"
            )
        if self.noise_scale < 0.0:
            raise InvalidConfig(f"noise_scale must be >= 0, got {self.noise_scale}")

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "dim": self.dim,
            "slides_per_class": self.slides_per_class,
            "patches_min": self.patches_min,
            "patches_max": self.patches_max,
            "informative_fraction": self.informative_fraction,
            "noise_scale": self.noise_scale,
            "seed": self.seed,
        }


def _class_directions(rng: np.random.Generator, num_classes: int, dim: int) -> np.ndarray:
    """Orthonormal class directions: a seeded random rotation of the first
    `num_classes` basis vectors (QR with the usual sign fix)."""
    gauss = rng.standard_normal((dim, num_classes))
    q, r = np.linalg.qr(gauss)
    q = q * np.sign(np.diag(r))[None, :]
    return q.T  # (num_classes, dim)


def _unit_rows(rows: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.einsum("ij,ij->i", rows, rows))
    return rows / norms[:, None]


def generate(config: SynthConfig) -> tuple[DatasetManifest, list[SlideBag], TextClassifier]:
    """Generate a labeled synthetic corpus and its matching text classifier.

    Slides are laid out class-major; within each slide the informative rows
    (exactly ceil(informative_fraction * N) of them) come first. The
    classifier's class vectors are the class directions themselves, as a
    single-prompt ensemble.
    """
    rng = np.random.default_rng(config.seed)
    directions = _class_directions(rng, config.num_classes, config.dim)
    class_names = tuple(f"class_{c}" for c in range(config.num_classes))

    records: list[SlideRecord] = []
    bags: list[SlideBag] = []
    for c in range(config.num_classes):
        for j in range(config.slides_per_class):
            n = int(rng.integers(config.patches_min, config.patches_max + 1))
            n_info = math.ceil(config.informative_fraction * n)
            blocks = []
            if n_info:
                noise = config.noise_scale * rng.standard_normal((n_info, config.dim))
                blocks.append(_unit_rows(directions[c][None, :] + noise))
            if n - n_info:
                blocks.append(_unit_rows(rng.standard_normal((n - n_info, config.dim))))
            rows = np.vstack(blocks).astype(np.float32)
            slide_id = f"{class_names[c]}_{j:03d}"
            records.append(
                SlideRecord(
                    slide_id=slide_id,
                    class_name=class_names[c],
                    path=f"{slide_id}.pse",
                    num_patches=n,
                )
            )
            bags.append(SlideBag(slide_id=slide_id, patches=PatchMatrix(rows), label=c))

    manifest = DatasetManifest(classes=class_names, slides=tuple(records))
    classifier = TextClassifier(
        class_names=class_names,
        weights=directions.astype(np.float32)[None, :, :],
    )
    return manifest, bags, classifier
