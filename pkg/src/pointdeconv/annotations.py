"""Dot annotations and the mapped label maps derived from them."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .psf import MappingFilter


class AnnotationError(ValueError):
    """Malformed or out-of-bounds dot annotation data."""


@dataclass(frozen=True)
class DotAnnotations:
    """Integer (x=column, y=row) cell centres inside a width x height image."""

    width: int
    height: int
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)
        if self.width < 1 or self.height < 1:
            raise AnnotationError("image dimensions must be positive")
        inside = (
            (pts[:, 0] >= 0) & (pts[:, 0] < self.width) & (pts[:, 1] >= 0) & (pts[:, 1] < self.height)
        )
        if not inside.all():
            bad = pts[~inside][0]
            raise AnnotationError(f"point ({bad[0]},{bad[1]}) outside {self.width}x{self.height}")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise AnnotationError("duplicate dot annotation")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def to_binary(self) -> np.ndarray:
        img = np.zeros((self.height, self.width), dtype=np.float64)
        if len(self.points):
            img[self.points[:, 1], self.points[:, 0]] = 1.0
        return img


def load_dots(source, width: int, height: int) -> DotAnnotations:
    """Parse ``x,y`` CSV lines (optional ``x,y`` header) from a text stream or string."""
    if isinstance(source, str):
        source = io.StringIO(source)
    points = []
    seen = set()
    for lineno, row in enumerate(csv.reader(source), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if lineno == 1 and [c.strip().lower() for c in row] == ["x", "y"]:
            continue
        if len(row) != 2:
            raise AnnotationError(f"line {lineno}: expected 'x,y', got {','.join(row)!r}")
        try:
            x, y = int(row[0]), int(row[1])
        except ValueError:
            raise AnnotationError(f"line {lineno}: non-integer coordinate {','.join(row)!r}") from None
        if not (0 <= x < width and 0 <= y < height):
            raise AnnotationError(f"line {lineno}: point ({x},{y}) outside {width}x{height}")
        if (x, y) in seen:
            raise AnnotationError(f"line {lineno}: duplicate point ({x},{y})")
        seen.add((x, y))
        points.append((x, y))
    return DotAnnotations(width, height, np.array(points, dtype=np.int64).reshape(-1, 2))


def dump_dots(dots: DotAnnotations) -> str:
    lines = ["x,y"] + [f"{x},{y}" for x, y in dots.points]
    return "\n".join(lines) + "\n"


def synthesize_label_map(dots: DotAnnotations, filt: MappingFilter) -> np.ndarray:
    """Stamp the mapping filter at every dot, combining overlaps by pixel-wise maximum.

    Stamps are clipped at the image border.
    """
    out = np.zeros((dots.height, dots.width), dtype=np.float64)
    r = filt.radius
    for x, y in dots.points:
        y0, y1 = max(y - r, 0), min(y + r + 1, dots.height)
        x0, x1 = max(x - r, 0), min(x + r + 1, dots.width)
        stamp = filt.weights[y0 - (y - r) : y1 - (y - r), x0 - (x - r) : x1 - (x - r)]
        np.maximum(out[y0:y1, x0:x1], stamp, out=out[y0:y1, x0:x1])
    return out
