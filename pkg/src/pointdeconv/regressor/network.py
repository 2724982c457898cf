"""Small encoder-decoder with a fixed mapping-filter output layer.

Activations are NHWC numpy arrays.  Every trainable layer is a same-padded
convolution followed by ReLU; the final 1x1 convolution + ReLU produces the
non-negative pre-map, which is convolved with the (non-trainable) mapping
filter to give the logits.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..psf import MappingFilter, convolve2d, make_mapping_filter
from ..seeding import rng_for


@dataclass(frozen=True)
class NetworkConfig:
    input_size: int = 64
    channels: tuple = (8, 16, 32)
    filter_radius: int = 5
    pos_weight: float = 100.0
    learning_rate: float = 0.001
    epochs: int = 200
    seed: int = 0
    in_channels: int = 1
    batch_size: int = 4

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if not self.channels or min(self.channels) < 1:
            raise ValueError("channels must be a non-empty list of positive counts")
        if self.input_size < 1 or self.input_size % 2 ** (len(self.channels) - 1):
            raise ValueError(
                f"input_size {self.input_size} not divisible by 2^{len(self.channels) - 1}"
            )
        if self.pos_weight <= 0:
            raise ValueError("pos_weight must be > 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.filter_radius < 1 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("invalid filter_radius, epochs or batch_size")
        if self.in_channels not in (1, 3):
            raise ValueError("in_channels must be 1 or 3")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        known = cls.__dataclass_fields__.keys()
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass(frozen=True)
class NetworkOutput:
    pre_map: np.ndarray
    logits: np.ndarray


def layer_specs(config: NetworkConfig) -> list[tuple[str, int, int, int]]:
    """Ordered ``(name, in_channels, out_channels, kernel)`` for every trainable conv."""
    ch = config.channels
    specs = []
    prev = config.in_channels
    for s, c in enumerate(ch):
        specs.append((f"enc{s}a", prev, c, 3))
        specs.append((f"enc{s}b", c, c, 3))
        prev = c
    for s in range(len(ch) - 2, -1, -1):
        specs.append((f"dec{s}a", prev + ch[s], ch[s], 3))
        specs.append((f"dec{s}b", ch[s], ch[s], 3))
        prev = ch[s]
    specs.append(("head", prev, 1, 1))
    return specs


@dataclass
class Network:
    config: NetworkConfig
    params: list  # [W0, b0, W1, b1, ...], W as (out, in, k, k)
    mapping_filter: MappingFilter = field(repr=False)

    @property
    def dtype(self):
        return self.params[0].dtype

    def param_names(self) -> list[str]:
        names = []
        for name, *_ in layer_specs(self.config):
            names += [f"{name}.weight", f"{name}.bias"]
        return names

    def astype(self, dtype) -> "Network":
        return Network(self.config, [p.astype(dtype) for p in self.params], self.mapping_filter)


def init_network(config: NetworkConfig, dtype=np.float32) -> Network:
    """He fan-in normal weights, zero biases, deterministic in ``config.seed``."""
    rng = rng_for(config.seed, "init")
    params = []
    for _, cin, cout, k in layer_specs(config):
        std = np.sqrt(2.0 / (cin * k * k))
        params.append((rng.standard_normal((cout, cin, k, k)) * std).astype(dtype))
        params.append(np.zeros(cout, dtype=dtype))
    return Network(config, params, make_mapping_filter(config.filter_radius))


# -- layer primitives ------------------------------------------------------

def _conv_forward(x, w, b):
    n, h, wd, c = x.shape
    k = w.shape[-1]
    p = k // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
    cols = sliding_window_view(xp, (k, k), axis=(1, 2)).reshape(n * h * wd, c * k * k)
    wm = w.reshape(w.shape[0], -1).T
    out = cols @ wm + b
    return out.reshape(n, h, wd, -1), cols


def _conv_backward(dout, cols, x_shape, w):
    n, h, wd, c = x_shape
    o, _, k, _ = w.shape
    p = k // 2
    d2 = dout.reshape(-1, o)
    dw = (cols.T @ d2).T.reshape(w.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ w.reshape(o, -1)).reshape(n, h, wd, c, k, k)
    dxp = np.zeros((n, h + 2 * p, wd + 2 * p, c), dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, i : i + h, j : j + wd, :] += dcols[..., i, j]
    dx = dxp[:, p : p + h, p : p + wd, :] if p else dxp
    return dx, dw, db


def _pool_forward(x):
    n, h, w, c = x.shape
    win = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, h // 2, w // 2, c, 4)
    idx = win.argmax(axis=-1)[..., None]
    return np.take_along_axis(win, idx, axis=-1)[..., 0], idx


def _pool_backward(dout, idx, x_shape):
    n, h, w, c = x_shape
    dwin = np.zeros(dout.shape + (4,), dtype=dout.dtype)
    np.put_along_axis(dwin, idx, dout[..., None], axis=-1)
    return dwin.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(x_shape)


def _upsample(x):
    return x.repeat(2, axis=1).repeat(2, axis=2)


def _upsample_backward(dout):
    n, h, w, c = dout.shape
    return dout.reshape(n, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4))


def apply_mapping_head(net: Network, pre_map) -> np.ndarray:
    """Convolve (N, H, W) or (H, W) pre-maps with the fixed mapping filter, zero padded."""
    pre_map = np.asarray(pre_map)
    f = net.mapping_filter.weights.astype(pre_map.dtype)
    if pre_map.ndim == 2:
        return convolve2d(pre_map, f, "zero")
    return np.stack([convolve2d(p, f, "zero") for p in pre_map])


def _mapping_head_backward(net: Network, dlogits):
    f = net.mapping_filter.weights[::-1, ::-1].astype(dlogits.dtype)
    return np.stack([convolve2d(g, f, "zero") for g in dlogits])


# -- forward / backward ----------------------------------------------------

def as_batch(net: Network, images) -> np.ndarray:
    """Stack (H, W) or (H, W, C) images into an NHWC array of the network dtype."""
    cfg = net.config
    arr = np.asarray(images, dtype=net.dtype)
    if arr.ndim == 2 or (arr.ndim == 3 and cfg.in_channels == 3 and arr.shape[-1] == 3):
        arr = arr[None]
    if arr.ndim == 3:
        arr = arr[..., None]
    expected = (cfg.input_size, cfg.input_size, cfg.in_channels)
    if arr.ndim != 4 or arr.shape[1:] != expected:
        raise ValueError(f"expected images of shape {expected}, got {arr.shape[1:]}")
    return arr


def forward_batch(net: Network, x, keep_cache: bool = False):
    """Run NHWC ``x`` through the network; returns (pre_map, logits, cache)."""
    specs = layer_specs(net.config)
    n_stages = len(net.config.channels)
    cache = []
    li = 0

    def conv_relu(h):
        nonlocal li
        w, b = net.params[2 * li], net.params[2 * li + 1]
        z, cols = _conv_forward(h, w, b)
        a = np.maximum(z, 0)
        if keep_cache:
            cache.append(("conv", li, cols, h.shape, z > 0))
        li += 1
        return a

    skips = []
    h = x
    for s in range(n_stages):
        h = conv_relu(conv_relu(h))
        if s < n_stages - 1:
            skips.append(h)
            shape = h.shape
            h, idx = _pool_forward(h)
            if keep_cache:
                cache.append(("pool", s, idx, shape))
    for s in range(n_stages - 2, -1, -1):
        up = _upsample(h)
        c_up = up.shape[-1]
        h = np.concatenate([up, skips[s]], axis=-1)
        if keep_cache:
            cache.append(("concat", s, c_up))
        h = conv_relu(conv_relu(h))
    pre = conv_relu(h)[..., 0]
    assert li == len(specs)
    logits = apply_mapping_head(net, pre)
    return pre, logits, cache


def backward_batch(net: Network, cache, dlogits) -> list[np.ndarray]:
    """Gradients of the loss w.r.t. ``net.params`` given dL/dlogits (N, H, W)."""
    grads = [None] * len(net.params)
    skip_grads = {}
    g = _mapping_head_backward(net, dlogits)[..., None]
    for entry in reversed(cache):
        kind = entry[0]
        if kind == "conv":
            _, li, cols, x_shape, active = entry
            g = g * active
            g, dw, db = _conv_backward(g, cols, x_shape, net.params[2 * li])
            grads[2 * li], grads[2 * li + 1] = dw, db
        elif kind == "concat":
            _, s, c_up = entry
            skip_grads[s] = g[..., c_up:]
            g = _upsample_backward(g[..., :c_up])
        elif kind == "pool":
            _, s, idx, shape = entry
            # the pre-pool activation also feeds decoder stage s through the skip
            g = _pool_backward(g, idx, shape) + skip_grads.pop(s)
    return grads


def forward(net: Network, image) -> NetworkOutput:
    """Pre-map and logits for a single (H, W) or (H, W, 3) image."""
    pre, logits, _ = forward_batch(net, as_batch(net, image))
    return NetworkOutput(pre_map=pre[0], logits=logits[0])
