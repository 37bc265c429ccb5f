"""Image files: 8-bit PNG (via Pillow) and binary PPM.

Values are treated as linear, clamped to [0, 1] and quantized with rounding;
no gamma curve is applied on write or undone on read.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np


def to_uint8(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=-1)
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ppm(path: str | os.PathLike, img) -> None:
    px = to_uint8(img)
    h, w, _ = px.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + px.tobytes())


def read_ppm(path: str | os.PathLike) -> np.ndarray:
    buf = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            pos = buf.index(b"\n", pos) + 1
            continue
        end = pos
        while not buf[end:end + 1].isspace():
            end += 1
        tokens.append(buf[pos:end])
        pos = end
    if tokens[0] != b"P6":
        raise ValueError("only binary P6 pixmaps are supported")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError("only 8-bit pixmaps are supported")
    pos += 1
    px = np.frombuffer(buf, dtype=np.uint8, count=w * h * 3, offset=pos).reshape(h, w, 3)
    return px.astype(np.float64) / 255.0


def save_image(path: str | os.PathLike, img) -> None:
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pnm"):
        write_ppm(path, img)
        return
    from PIL import Image

    Image.fromarray(to_uint8(img), mode="RGB").save(path)


def load_image(path: str | os.PathLike) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pnm"):
        return read_ppm(path)
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
