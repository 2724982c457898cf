"""Blind Richardson-Lucy deconvolution with the mapping filter as initial PSF."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .psf import MappingFilter, convolve2d

EPS = 1e-12


@dataclass(frozen=True)
class DeconvParams:
    outer_iterations: int = 10
    image_iterations_per_outer: int = 5
    psf_iterations_per_outer: int = 5
    psf_frozen: bool = False

    def __post_init__(self):
        for name in ("outer_iterations", "image_iterations_per_outer", "psf_iterations_per_outer"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


def _check_nonneg(**arrays):
    for name, a in arrays.items():
        if not np.all(np.isfinite(a)):
            raise ValueError(f"{name} contains non-finite values")
        if np.any(a < 0):
            raise ValueError(f"{name} must be non-negative")


def rl_image_step(estimate, observed, psf) -> np.ndarray:
    """One multiplicative Richardson-Lucy update of the image estimate."""
    estimate = np.asarray(estimate, dtype=np.float64)
    observed = np.asarray(observed, dtype=np.float64)
    psf = np.asarray(psf, dtype=np.float64)
    _check_nonneg(estimate=estimate, observed=observed, psf=psf)
    blurred = convolve2d(estimate, psf, "symmetric")
    ratio = observed / np.maximum(blurred, EPS)
    return estimate * convolve2d(ratio, psf[::-1, ::-1], "symmetric")


def rl_psf_step(psf_estimate, observed, image_estimate) -> np.ndarray:
    """One multiplicative update of the PSF, renormalized to unit sum.

    The PSF keeps its window size, and zero taps stay zero, so its support
    never grows.
    """
    psf = np.asarray(psf_estimate, dtype=np.float64)
    observed = np.asarray(observed, dtype=np.float64)
    image = np.asarray(image_estimate, dtype=np.float64)
    _check_nonneg(psf_estimate=psf, observed=observed, image_estimate=image)
    kh, kw = psf.shape
    ph, pw = kh // 2, kw // 2
    h, w = image.shape
    ratio = observed / np.maximum(convolve2d(image, psf, "symmetric"), EPS)
    padded = np.pad(image, ((ph, ph), (pw, pw)), mode="symmetric")
    flux = image.sum()
    if flux <= 0:
        raise ValueError("image estimate has no mass")
    # correction[i, j] = sum_y ratio(y) * image(y - d), d = (i - ph, j - pw)
    correction = np.zeros_like(psf)
    for i in range(kh):
        for j in range(kw):
            if psf[i, j] == 0:
                continue
            shifted = padded[kh - 1 - i : kh - 1 - i + h, kw - 1 - j : kw - 1 - j + w]
            correction[i, j] = np.vdot(ratio, shifted)
    updated = psf * correction / flux
    total = updated.sum()
    if total <= 0:
        raise ValueError("PSF update collapsed to zero")
    return updated / total


def blind_deconvolve(observed, init_psf: MappingFilter, params: DeconvParams = DeconvParams(),
                     on_iteration=None):
    """Max-normalize ``observed`` and alternate image / PSF Richardson-Lucy blocks.

    Each outer iteration runs the image block first, then the PSF block
    (skipped when ``params.psf_frozen``).  ``on_iteration(outer, estimate, psf)``
    is called after every outer iteration if given.

    Returns
    -------
    restored, final_psf : numpy.ndarray
    """
    observed = np.asarray(observed, dtype=np.float64)
    _check_nonneg(observed=observed)
    peak = observed.max()
    if peak <= 0:
        raise ValueError("empty map")
    observed = observed / peak
    psf = init_psf.weights if isinstance(init_psf, MappingFilter) else np.asarray(init_psf, np.float64)
    psf = psf / psf.sum()
    estimate = observed.copy()
    for outer in range(params.outer_iterations):
        for _ in range(params.image_iterations_per_outer):
            estimate = rl_image_step(estimate, observed, psf)
        if not params.psf_frozen:
            for _ in range(params.psf_iterations_per_outer):
                psf = rl_psf_step(psf, observed, estimate)
        if on_iteration is not None:
            on_iteration(outer, estimate, psf)
    return estimate, psf
