"""Positive-weighted sigmoid cross-entropy on logits."""

import numpy as np
from scipy.special import expit


def weighted_bce_loss(logits, target, pos_weight: float):
    """Mean of ``w*t*softplus(-x) + (1-t)*softplus(x)`` and its gradient.

    Returns ``(loss, grad_logits)`` where the gradient already includes the
    1/N of the mean.
    """
    x = np.asarray(logits)
    t = np.asarray(target, dtype=x.dtype if x.dtype.kind == "f" else np.float64)
    if x.shape != t.shape:
        raise ValueError(f"shape mismatch: logits {x.shape} vs target {t.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite logits")
    if np.any(t < 0) or np.any(t > 1):
        raise ValueError("target must lie in [0, 1]")
    n = x.size
    per_pixel = pos_weight * t * np.logaddexp(0, -x) + (1 - t) * np.logaddexp(0, x)
    sig = expit(x)
    grad = (pos_weight * t * (sig - 1) + (1 - t) * sig) / n
    return float(per_pixel.sum(dtype=np.float64) / n), grad.astype(x.dtype, copy=False)
