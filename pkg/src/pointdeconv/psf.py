"""Mapping filter construction and the shared convolution / distance kernels."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

PADDING_MODES = ("zero", "symmetric")


def distance_transform(binary):
    """Exact Euclidean distance from every pixel to the nearest 1-pixel.

    Parameters
    ----------
    binary : array_like
        2-D image with values in {0, 1}.

    Returns
    -------
    numpy.ndarray
        float64 distances; foreground pixels map to 0.
    """
    binary = np.asarray(binary)
    if binary.ndim != 2:
        raise ValueError("distance_transform expects a 2-D image")
    if not np.isin(binary, (0, 1)).all():
        raise ValueError("distance_transform expects values in {0, 1}")
    if not binary.any():
        raise ValueError("no foreground pixel")
    # edt measures distance to the nearest zero, so invert the mask
    return ndimage.distance_transform_edt(binary == 0).astype(np.float64)


@dataclass(frozen=True)
class MappingFilter:
    """Cone-shaped kernel falling linearly from 1 at the centre to 0 at ``radius``.

    ``weights`` is read-only; the filter is shared between label synthesis,
    the fixed network head and the deconvolution PSF initializer.
    """

    radius: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape != (self.size, self.size):
            raise ValueError(f"weights must be {self.size}x{self.size}")
        if not np.all((w >= 0) & (w <= 1)):
            raise ValueError("weights must lie in [0, 1]")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return 2 * self.radius + 1

    def digest(self) -> str:
        """sha256 of the little-endian float64 weight bytes."""
        return hashlib.sha256(self.weights.astype("<f8").tobytes()).hexdigest()

    def to_json(self) -> str:
        return json.dumps(
            {"radius": self.radius, "size": self.size, "weights": self.weights.ravel().tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> "MappingFilter":
        obj = json.loads(text)
        size = int(obj["size"])
        if size != 2 * int(obj["radius"]) + 1:
            raise ValueError("size must equal 2*radius + 1")
        weights = np.asarray(obj["weights"], dtype=np.float64).reshape(size, size)
        return cls(radius=int(obj["radius"]), weights=weights)


def make_mapping_filter(radius: int) -> MappingFilter:
    """Build the mapping filter ``max(0, (r - dist) / r)`` on a (2r+1)^2 grid."""
    if isinstance(radius, bool) or int(radius) != radius or radius < 1:
        raise ValueError(f"radius must be an integer >= 1, got {radius!r}")
    radius = int(radius)
    seed = np.zeros((2 * radius + 1, 2 * radius + 1), dtype=np.uint8)
    seed[radius, radius] = 1
    dist = distance_transform(seed)
    weights = np.clip((radius - dist) / radius, 0.0, None)
    return MappingFilter(radius=radius, weights=weights)


def convolve2d(image, kernel, padding: str = "zero") -> np.ndarray:
    """Same-size true 2-D convolution by direct shifted accumulation.

    ``padding`` is ``"zero"`` or ``"symmetric"`` (edge-inclusive mirror,
    numpy's ``symmetric`` mode).
    """
    image = np.asarray(image)
    kernel = np.asarray(kernel)
    if image.ndim != 2 or kernel.ndim != 2:
        raise ValueError("convolve2d expects 2-D image and kernel")
    kh, kw = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("kernel sides must be odd")
    if padding not in PADDING_MODES:
        raise ValueError(f"padding must be one of {PADDING_MODES}")
    ph, pw = kh // 2, kw // 2
    h, w = image.shape
    if kh > h or kw > w:
        raise ValueError("kernel larger than image")
    if padding == "zero":
        padded = np.pad(image, ((ph, ph), (pw, pw)))
    else:
        padded = np.pad(image, ((ph, ph), (pw, pw)), mode="symmetric")
    dtype = np.result_type(image.dtype, kernel.dtype, np.float32)
    out = np.zeros((h, w), dtype=dtype)
    # out[y, x] = sum_{i,j} k[i, j] * img[y + ph - i, x + pw - j]
    for i in range(kh):
        for j in range(kw):
            k = kernel[i, j]
            if k == 0:
                continue
            out += k * padded[kh - 1 - i : kh - 1 - i + h, kw - 1 - j : kw - 1 - j + w]
    return out
