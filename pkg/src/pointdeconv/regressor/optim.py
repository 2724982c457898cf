"""Adagrad with per-element squared-gradient accumulators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AdagradState:
    accumulators: list
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, params, epsilon: float = 1e-8) -> "AdagradState":
        return cls([np.zeros_like(p) for p in params], epsilon)


def adagrad_update(params, grads, state: AdagradState, lr: float) -> None:
    """In place: ``G += g**2; p -= lr * g / (sqrt(G) + eps)``."""
    for p, g, acc in zip(params, grads, state.accumulators):
        acc += g * g
        p -= lr * g / (np.sqrt(acc) + state.epsilon)
