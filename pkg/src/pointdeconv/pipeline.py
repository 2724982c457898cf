"""Whole-image inference: detection maps, tiling and seam de-duplication."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .deconv import DeconvParams
from .detect import DetectionSet, DetectParams, detect_deconv, local_maxima
from .psf import MappingFilter
from .regressor import Network, predict_logits

MAP_KINDS = ("logits", "probability")
METHODS = ("deconv", "local-maxima")
SEAM_DEDUP_RADIUS = 3.0


def detection_map(net: Network, image, kind: str = "logits") -> np.ndarray:
    """Map handed to the point extractors.

    ``logits`` is the mapped output layer itself (non-negative by
    construction); ``probability`` is its sigmoid.
    """
    logits = predict_logits(net, image)
    if kind == "logits":
        return np.maximum(logits, 0.0)
    if kind == "probability":
        return expit(logits)
    raise ValueError(f"unknown map kind {kind!r}")


def extract_points(map_, method: str, filt: MappingFilter, dparams: DeconvParams,
                   params: DetectParams) -> DetectionSet:
    if method == "deconv":
        return detect_deconv(map_, filt, dparams, params)
    if method == "local-maxima":
        return local_maxima(map_, params.maxima_min_distance, params.maxima_min_value)
    raise ValueError(f"unknown method {method!r}")


def tile_offsets(length: int, tile: int) -> list[int]:
    """Start offsets covering ``length`` with ``tile``-sized windows at 50% overlap."""
    if length < tile:
        raise ValueError(f"image side {length} smaller than tile {tile}")
    stride = max(tile // 2, 1)
    offsets = list(range(0, length - tile + 1, stride))
    if offsets[-1] != length - tile:
        offsets.append(length - tile)
    return offsets


def dedupe(points, radius: float = SEAM_DEDUP_RADIUS) -> np.ndarray:
    """Drop every point within ``radius`` of an earlier kept point."""
    kept = []
    for p in np.asarray(points, dtype=np.float64).reshape(-1, 2):
        if all(np.hypot(*(p - q)) > radius for q in kept):
            kept.append(p)
    return np.array(kept).reshape(-1, 2)


def detect_tiled(image, tile: int, tile_detector, source: str) -> DetectionSet:
    """Run ``tile_detector(tile_image) -> DetectionSet`` over overlapping tiles.

    A tile keeps only detections in its central region (a quarter-tile
    margin, waived on image borders); survivors are merged and de-duplicated
    within ``SEAM_DEDUP_RADIUS`` pixels.
    """
    image = np.asarray(image)
    h, w = image.shape[:2]
    if h == tile and w == tile:
        return tile_detector(image)
    margin = tile / 4
    xs, ys = tile_offsets(w, tile), tile_offsets(h, tile)
    found = []
    for y0 in ys:
        for x0 in xs:
            dets = tile_detector(image[y0 : y0 + tile, x0 : x0 + tile])
            for x, y in dets.points:
                if (x < margin and x0 > 0) or (x > tile - 1 - margin and x0 + tile < w):
                    continue
                if (y < margin and y0 > 0) or (y > tile - 1 - margin and y0 + tile < h):
                    continue
                found.append((x + x0, y + y0))
    return DetectionSet(dedupe(found), source)


def detect_image(net: Network, image, method: str = "deconv", map_kind: str = "logits",
                 dparams: DeconvParams = DeconvParams(),
                 params: DetectParams = DetectParams()) -> DetectionSet:
    """Detect cell centres in an image of any size >= the network input."""
    source = "deconvolution" if method == "deconv" else "local_maxima"

    def run(tile_image):
        return extract_points(detection_map(net, tile_image, map_kind), method,
                              net.mapping_filter, dparams, params)

    return detect_tiled(image, net.config.input_size, run, source)
