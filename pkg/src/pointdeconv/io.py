"""File formats shared across the toolkit and atomic-write helpers."""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

_HEADER = struct.Struct("<II")


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def encode_float_map(image) -> bytes:
    """8-byte header (width, height as u32 LE) then row-major f32 LE values."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("float map must be 2-D")
    h, w = image.shape
    return _HEADER.pack(w, h) + image.astype("<f4").tobytes()


def decode_float_map(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise ValueError("float map truncated: missing header")
    w, h = _HEADER.unpack_from(data)
    body = data[_HEADER.size :]
    if len(body) != 4 * w * h:
        raise ValueError(f"float map body has {len(body)} bytes, expected {4 * w * h}")
    return np.frombuffer(body, dtype="<f4").reshape(h, w).astype(np.float32)


def write_float_map(path, image) -> None:
    atomic_write_bytes(path, encode_float_map(image))


def read_float_map(path) -> np.ndarray:
    return decode_float_map(Path(path).read_bytes())


def write_png16(path, image) -> None:
    """Write values in [0, 1] as 16-bit grayscale scaled by 65535."""
    image = np.asarray(image, dtype=np.float64)
    if image.min() < 0 or image.max() > 1:
        raise ValueError("png16 export expects values in [0, 1]")
    scaled = np.round(image * 65535).astype(np.uint16)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(scaled).save(path)


def read_png16(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im, dtype=np.float64) / 65535.0
