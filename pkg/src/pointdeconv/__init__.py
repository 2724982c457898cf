"""Cell-centre detection by deconvolving a regressor trained on blurred dot labels."""

__version__ = "0.1.0"

from .annotations import DotAnnotations, load_dots, synthesize_label_map
from .deconv import DeconvParams, blind_deconvolve, rl_image_step, rl_psf_step
from .detect import (DetectionSet, DetectParams, centroids, connected_components, detect_deconv,
                     local_maxima, threshold_map)
from .evaluate import Matching, Metrics, compare_methods, compute_metrics, match_detections
from .psf import MappingFilter, convolve2d, distance_transform, make_mapping_filter

__all__ = [
    "DeconvParams", "DetectParams", "DetectionSet", "DotAnnotations", "MappingFilter", "Matching",
    "Metrics", "blind_deconvolve", "centroids", "compare_methods", "compute_metrics",
    "connected_components", "convolve2d", "detect_deconv", "distance_transform", "load_dots",
    "local_maxima", "make_mapping_filter", "match_detections", "rl_image_step", "rl_psf_step",
    "synthesize_label_map", "threshold_map",
]
