"""Training loop and probability-map prediction."""

from __future__ import annotations

import logging

import numpy as np
from scipy.special import expit

from ..annotations import DotAnnotations, synthesize_label_map
from ..seeding import rng_for
from .augment import augment
from .loss import weighted_bce_loss
from .network import Network, as_batch, backward_batch, forward, forward_batch
from .optim import AdagradState, adagrad_update

log = logging.getLogger(__name__)


def loss_and_grads(net: Network, images, targets):
    x = as_batch(net, images)
    t = np.asarray(targets, dtype=net.dtype).reshape(x.shape[:3])
    pre, logits, cache = forward_batch(net, x, keep_cache=True)
    loss, dlogits = weighted_bce_loss(logits, t, net.config.pos_weight)
    return loss, backward_batch(net, cache, dlogits), pre


def train_step(net: Network, state: AdagradState, batch, on_forward=None) -> float:
    """One Adagrad step on ``[(image, label_map), ...]``; returns the pre-update loss.

    Raises ``FloatingPointError`` and leaves the parameters untouched when the
    loss or any gradient is non-finite.
    """
    if not batch:
        raise ValueError("empty batch")
    images = [b[0] for b in batch]
    targets = [b[1] for b in batch]
    try:
        loss, grads, pre = loss_and_grads(net, images, targets)
    except ValueError as exc:
        if "non-finite" in str(exc):
            raise FloatingPointError(str(exc)) from exc
        raise
    if on_forward is not None:
        on_forward(pre)
    if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
        raise FloatingPointError("non-finite loss or gradient; parameters unchanged")
    adagrad_update(net.params, grads, state, net.config.learning_rate)
    return loss


def train(net: Network, samples, state: AdagradState | None = None, epochs: int | None = None,
          start_epoch: int = 0, on_epoch=None, on_forward=None):
    """Train on ``[(image, DotAnnotations), ...]`` with augmentation.

    Each epoch shuffles the samples with the ``("shuffle", epoch)`` stream and
    augments sample ``i`` with the ``("augment", epoch, i)`` stream, so
    resuming at ``start_epoch`` replays exactly.  Returns ``(state, losses)``
    where ``losses`` holds the mean batch loss of each epoch run.
    """
    cfg = net.config
    if not samples:
        raise ValueError("empty dataset")
    state = state or AdagradState.zeros_like(net.params)
    epochs = cfg.epochs if epochs is None else epochs
    losses = []
    for epoch in range(start_epoch, start_epoch + epochs):
        order = rng_for(cfg.seed, "shuffle", epoch).permutation(len(samples))
        batch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = []
            for i in order[start : start + cfg.batch_size]:
                image, dots = samples[i]
                img, pts = augment(image, dots, (cfg.seed, epoch, int(i)), cfg.input_size)
                batch.append((img, synthesize_label_map(pts, net.mapping_filter)))
            batch_losses.append(train_step(net, state, batch, on_forward))
        losses.append(float(np.mean(batch_losses)))
        log.info("epoch %d loss %.6f", epoch + 1, losses[-1])
        if on_epoch is not None:
            on_epoch(epoch, losses[-1])
    return state, losses


def predict_logits(net: Network, image) -> np.ndarray:
    return forward(net, image).logits.astype(np.float64)


def predict_probability_map(net: Network, image) -> np.ndarray:
    """Sigmoid of the mapped logits, in (0, 1)."""
    return expit(predict_logits(net, image))
