"""Point detections from restored or probability maps."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .deconv import DeconvParams, blind_deconvolve
from .psf import MappingFilter

SOURCES = ("deconvolution", "local_maxima", "segmentation_centroid")
EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)
RESTORED_FLOOR = 1e-6


@dataclass(frozen=True)
class DetectionSet:
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    source: str = "deconvolution"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise ValueError("detections must be finite")
        if self.source not in SOURCES:
            raise ValueError(f"unknown detection source {self.source!r}")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def to_csv(self) -> str:
        return "x,y\n" + "".join(f"{x:.2f},{y:.2f}\n" for x, y in self.points)

    def sidecar(self, params=None) -> str:
        return json.dumps(
            {"source": self.source, "params": params or {}, "count": len(self)},
            indent=2, sort_keys=True,
        ) + "\n"

    @classmethod
    def from_csv(cls, text: str, source: str = "deconvolution") -> "DetectionSet":
        rows = [ln.split(",") for ln in text.splitlines() if ln.strip()]
        if rows and [c.strip().lower() for c in rows[0]] == ["x", "y"]:
            rows = rows[1:]
        return cls(np.array([[float(x), float(y)] for x, y in rows]).reshape(-1, 2), source)


@dataclass(frozen=True)
class DetectParams:
    threshold: float = 0.2
    min_region_area: int = 2
    maxima_min_distance: int = 5
    maxima_min_value: float = 0.2

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if self.maxima_min_distance < 1:
            raise ValueError("maxima_min_distance must be >= 1")
        if self.min_region_area < 1:
            raise ValueError("min_region_area must be >= 1")


def threshold_map(image, threshold_fraction: float) -> np.ndarray:
    """1 where ``image >= threshold_fraction * max(image)``, else 0."""
    image = np.asarray(image, dtype=np.float64)
    if np.any(image < 0):
        raise ValueError("map must be non-negative")
    peak = image.max()
    if peak <= 0:
        raise ValueError("map is all zero")
    return (image >= threshold_fraction * peak).astype(np.uint8)


def connected_components(binary) -> list[np.ndarray]:
    """8-connected components as (n, 2) arrays of (x, y), ordered by (min y, min x)."""
    binary = np.asarray(binary)
    labels, n = ndimage.label(binary != 0, structure=EIGHT_CONNECTED)
    comps = []
    for sl_idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        ys, xs = np.nonzero(labels[sl] == sl_idx)
        comps.append(np.column_stack([xs + sl[1].start, ys + sl[0].start]))

    def key(c):
        ymin = c[:, 1].min()
        return (ymin, c[c[:, 1] == ymin, 0].min())

    return sorted(comps, key=key)


def centroids(components, min_area: int = 2, source: str = "deconvolution") -> DetectionSet:
    pts = [c.mean(axis=0) for c in components if len(c) >= min_area]
    return DetectionSet(np.array(pts).reshape(-1, 2), source)


def local_maxima(image, min_distance: int = 5, min_value: float = 0.2) -> DetectionSet:
    """Neighbourhood maxima with plateau merging and greedy distance suppression.

    A pixel is a candidate when it equals the maximum of its
    (2*min_distance+1)^2 window and is >= ``min_value``.  Connected candidate
    plateaus collapse to their centroid; survivors are then accepted in
    descending value order (ties by y, x) while keeping every accepted pair
    more than ``min_distance`` apart.
    """
    image = np.asarray(image, dtype=np.float64)
    if not np.all(np.isfinite(image)):
        raise ValueError("map must be finite")
    size = 2 * int(min_distance) + 1
    peaks = ndimage.maximum_filter(image, size=size, mode="nearest")
    candidates = (image == peaks) & (image >= min_value)
    cands = []
    for comp in connected_components(candidates):
        cx, cy = comp.mean(axis=0)
        cands.append((-image[comp[0, 1], comp[0, 0]], cy, cx))
    cands.sort()
    kept = []
    for _, cy, cx in cands:
        if all(np.hypot(cx - kx, cy - ky) > min_distance for kx, ky in kept):
            kept.append((cx, cy))
    return DetectionSet(np.array(kept).reshape(-1, 2), "local_maxima")


def detect_deconv(prob_map, filt: MappingFilter, dparams: DeconvParams = DeconvParams(),
                  params: DetectParams = DetectParams()) -> DetectionSet:
    """Blind deconvolution, relative threshold, 8-connected components, centroids."""
    prob_map = np.asarray(prob_map, dtype=np.float64)
    # a constant map (all zero, or the flat 0.5 of an untrained net) holds no point sources
    if prob_map.max() <= 0 or np.ptp(prob_map) <= RESTORED_FLOOR * prob_map.max():
        return DetectionSet(source="deconvolution")
    restored, _ = blind_deconvolve(prob_map, filt, dparams)
    if restored.max() < RESTORED_FLOOR:
        return DetectionSet(source="deconvolution")
    mask = threshold_map(restored, params.threshold)
    return centroids(connected_components(mask), params.min_region_area, "deconvolution")


def params_dict(*objs) -> dict:
    out = {}
    for o in objs:
        out.update(asdict(o))
    return out
