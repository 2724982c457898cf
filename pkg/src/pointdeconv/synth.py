"""Deterministic synthetic images of bright disks with dot-annotated centres."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .annotations import DotAnnotations
from .seeding import rng_for

MAX_ATTEMPTS = 1000


class SynthesisError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticConfig:
    image_size: int = 64
    n_images: int = 10
    cells_per_image: tuple = (10, 20)
    cell_radius: tuple = (3, 9)
    min_separation: float = 10.0
    noise_sigma: float = 0.05
    background_level: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "cells_per_image", tuple(int(v) for v in self.cells_per_image))
        object.__setattr__(self, "cell_radius", tuple(float(v) for v in self.cell_radius))
        lo, hi = self.cells_per_image
        if lo < 0 or hi < lo:
            raise ValueError("cells_per_image must be a non-empty range")
        rlo, rhi = self.cell_radius
        if rlo <= 0 or rhi < rlo:
            raise ValueError("cell_radius must be a non-empty positive range")
        if self.min_separation < 1:
            raise ValueError("min_separation must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.image_size < 1 or self.n_images < 0:
            raise ValueError("invalid image_size or n_images")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cells_per_image"] = list(self.cells_per_image)
        d["cell_radius"] = list(self.cell_radius)
        return d


def render_disks(size: int, centres, radii, intensities, background: float) -> np.ndarray:
    """Anti-aliased disks (linear coverage ramp over one pixel) over a flat background.

    Overlapping disks take the brighter value.
    """
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    image = np.full((size, size), background, dtype=np.float64)
    for (cx, cy), r, a in zip(centres, radii, intensities):
        coverage = np.clip(r + 0.5 - np.hypot(xx - cx, yy - cy), 0.0, 1.0)
        image = np.maximum(image, background + (a - background) * coverage)
    return image


def generate_image(config: SyntheticConfig, index: int):
    """Image ``index`` of the dataset: ``(image float32 in [0,1], DotAnnotations)``."""
    rng = rng_for(config.seed, "synth", index)
    size = config.image_size
    n_cells = int(rng.integers(config.cells_per_image[0], config.cells_per_image[1] + 1))
    centres, radii = [], []
    for cell in range(n_cells):
        r = float(rng.uniform(*config.cell_radius))
        margin = int(np.ceil(min(r, (size - 1) / 2)))
        for _ in range(MAX_ATTEMPTS):
            c = rng.integers(margin, size - margin, size=2)
            if all(np.hypot(*(c - q)) >= config.min_separation for q in centres):
                break
        else:
            raise SynthesisError(
                f"image {index}: could not place cell {cell + 1}/{n_cells} with min_separation "
                f"{config.min_separation} after {MAX_ATTEMPTS} attempts; lower cells_per_image "
                f"or min_separation"
            )
        centres.append(c)
        radii.append(r)
    intensities = rng.uniform(0.6, 1.0, size=n_cells)
    image = render_disks(size, centres, radii, intensities, config.background_level)
    if config.noise_sigma > 0:
        image = image + rng.normal(0.0, config.noise_sigma, size=image.shape)
    image = np.clip(image, 0.0, 1.0).astype(np.float32)
    return image, DotAnnotations(size, size, np.array(centres, dtype=np.int64).reshape(-1, 2))


def generate_dataset(config: SyntheticConfig):
    return [generate_image(config, i) for i in range(config.n_images)]
