"""Training-time crop, flip and photometric jitter with consistent dot transforms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..annotations import DotAnnotations
from ..seeding import rng_for

BRIGHTNESS = 0.1
CONTRAST = (0.9, 1.1)
HUE = 0.04
SATURATION = (0.8, 1.2)


@dataclass(frozen=True)
class AugmentDraw:
    crop_x: int = 0
    crop_y: int = 0
    hflip: bool = False
    vflip: bool = False
    brightness: float = 0.0
    contrast: float = 1.0
    hue: float = 0.0
    saturation: float = 1.0


def draw_augmentation(rng: np.random.Generator, width: int, height: int, size: int,
                      color: bool) -> AugmentDraw:
    if width < size or height < size:
        raise ValueError(f"image {width}x{height} smaller than crop {size}")
    return AugmentDraw(
        crop_x=int(rng.integers(0, width - size + 1)),
        crop_y=int(rng.integers(0, height - size + 1)),
        hflip=bool(rng.random() < 0.5),
        vflip=bool(rng.random() < 0.5),
        brightness=float(rng.uniform(-BRIGHTNESS, BRIGHTNESS)),
        contrast=float(rng.uniform(*CONTRAST)),
        hue=float(rng.uniform(-HUE, HUE)) if color else 0.0,
        saturation=float(rng.uniform(*SATURATION)) if color else 1.0,
    )


def _hue_saturation(image, hue, saturation):
    from matplotlib.colors import hsv_to_rgb, rgb_to_hsv

    hsv = rgb_to_hsv(np.clip(image, 0, 1))
    hsv[..., 0] = (hsv[..., 0] + hue) % 1.0
    hsv[..., 1] = np.clip(hsv[..., 1] * saturation, 0, 1)
    return hsv_to_rgb(hsv)


def apply_augmentation(image, dots: DotAnnotations, draw: AugmentDraw, size: int):
    """Apply ``draw`` to an (H, W) or (H, W, 3) image and its dots.

    Dots falling outside the crop window are dropped.  No-op components
    leave pixel values untouched.
    """
    image = np.asarray(image)
    height, width = image.shape[:2]
    if width < size or height < size:
        raise ValueError(f"image {width}x{height} smaller than crop {size}")
    x0, y0 = draw.crop_x, draw.crop_y
    out = image[y0 : y0 + size, x0 : x0 + size]
    pts = dots.points - np.array([x0, y0])
    keep = (pts[:, 0] >= 0) & (pts[:, 0] < size) & (pts[:, 1] >= 0) & (pts[:, 1] < size)
    pts = pts[keep]
    if draw.hflip:
        out = out[:, ::-1]
        pts = np.column_stack([size - 1 - pts[:, 0], pts[:, 1]])
    if draw.vflip:
        out = out[::-1]
        pts = np.column_stack([pts[:, 0], size - 1 - pts[:, 1]])
    out = np.array(out)
    if out.ndim == 3 and (draw.hue != 0.0 or draw.saturation != 1.0):
        out = _hue_saturation(out, draw.hue, draw.saturation).astype(image.dtype)
    if draw.contrast != 1.0:
        mean = out.mean(axis=(0, 1), keepdims=True)
        out = (out - mean) * draw.contrast + mean
    if draw.brightness != 0.0:
        out = out + draw.brightness
    if draw.contrast != 1.0 or draw.brightness != 0.0:
        out = np.clip(out, 0.0, 1.0)
    return out.astype(image.dtype, copy=False), DotAnnotations(size, size, pts)


def augment(image, dots: DotAnnotations, rng_seed, size: int):
    """Random crop to ``size``, independent 50% flips and photometric jitter.

    ``rng_seed`` is an int or a tuple of sub-stream keys passed to ``rng_for``.
    """
    keys = rng_seed if isinstance(rng_seed, tuple) else (rng_seed,)
    image = np.asarray(image)
    rng = rng_for(keys[0], "augment", *keys[1:])
    draw = draw_augmentation(rng, image.shape[1], image.shape[0], size, color=image.ndim == 3)
    return apply_augmentation(image, dots, draw, size)
