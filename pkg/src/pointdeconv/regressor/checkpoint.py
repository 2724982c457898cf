"""Checkpoints: JSON manifest plus a float32 LE blob of parameters and Adagrad accumulators."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..io import atomic_write_bytes, sha256_bytes, write_json
from ..psf import make_mapping_filter
from .network import Network, NetworkConfig, layer_specs
from .optim import AdagradState

MANIFEST = "checkpoint.json"
BLOB = "checkpoint.bin"


class CheckpointError(ValueError):
    pass


def save_checkpoint(directory, net: Network, state: AdagradState, epoch: int, loss_history) -> str:
    """Write manifest + blob into ``directory``; returns the blob sha256."""
    directory = Path(directory)
    arrays = list(net.params) + list(state.accumulators)
    blob = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in arrays)
    digest = sha256_bytes(blob)
    atomic_write_bytes(directory / BLOB, blob)
    write_json(directory / MANIFEST, {
        "config": net.config.to_dict(),
        "epoch": int(epoch),
        "loss_history": [float(v) for v in loss_history],
        "parameters": [{"name": n, "shape": list(p.shape)} for n, p in zip(net.param_names(), net.params)],
        "adagrad_epsilon": state.epsilon,
        "mapping_filter_sha256": net.mapping_filter.digest(),
        "blob": BLOB,
        "blob_sha256": digest,
    })
    return digest


def load_checkpoint(directory):
    """Returns ``(net, state, epoch, loss_history)``; verifies the blob hash."""
    directory = Path(directory)
    try:
        manifest = json.loads((directory / MANIFEST).read_text())
        blob = (directory / manifest.get("blob", BLOB)).read_bytes()
    except FileNotFoundError as exc:
        raise CheckpointError(f"checkpoint missing: {exc.filename}") from None
    if sha256_bytes(blob) != manifest["blob_sha256"]:
        raise CheckpointError("checkpoint blob hash mismatch")
    config = NetworkConfig.from_dict(manifest["config"])
    filt = make_mapping_filter(config.filter_radius)
    if filt.digest() != manifest["mapping_filter_sha256"]:
        raise CheckpointError("mapping filter hash mismatch")
    shapes = []
    for _, cin, cout, k in layer_specs(config):
        shapes += [(cout, cin, k, k), (cout,)]
    flat = np.frombuffer(blob, dtype="<f4")
    expected = 2 * sum(int(np.prod(s)) for s in shapes)
    if flat.size != expected:
        raise CheckpointError(f"blob holds {flat.size} floats, expected {expected}")
    arrays, pos = [], 0
    for s in shapes + shapes:
        size = int(np.prod(s))
        arrays.append(flat[pos : pos + size].reshape(s).astype(np.float32))
        pos += size
    n = len(shapes)
    net = Network(config, arrays[:n], filt)
    state = AdagradState(arrays[n:], float(manifest.get("adagrad_epsilon", 1e-8)))
    return net, state, int(manifest["epoch"]), list(manifest["loss_history"])
