"""Image front-end: PPM (P6) input and bilinear resizing."""
from __future__ import annotations

import numpy as np

from .errors import CorruptFileError, InvalidShapeError, UnsupportedFormatError
from .tensor import Tensor


def load_ppm(path) -> np.ndarray:
    """Read a binary PPM (P6, maxval 255) as an (H, W, 3) uint8 array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] != b"P6":
        raise UnsupportedFormatError(f"{path}: not a P6 PPM file")

    # header = magic, width, height, maxval as whitespace-separated tokens,
    # with optional '#' comment lines
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3 and pos < len(raw):
        c = raw[pos : pos + 1]
        if c == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(raw) and not raw[pos : pos + 1].isspace():
                pos += 1
            tokens.append(raw[start:pos])
    if len(tokens) < 3:
        raise CorruptFileError(f"{path}: truncated PPM header")
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise CorruptFileError(f"{path}: bad PPM header") from exc
    if maxval != 255:
        raise UnsupportedFormatError(f"{path}: only maxval 255 is supported")
    if width < 1 or height < 1:
        raise CorruptFileError(f"{path}: bad image dimensions")
    pos += 1  # single whitespace after maxval
    need = width * height * 3
    body = raw[pos : pos + need]
    if len(body) < need:
        raise CorruptFileError(f"{path}: truncated pixel data")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3).copy()


def save_ppm(path, pixels: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 array as binary PPM."""
    arr = np.asarray(pixels, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidShapeError(f"expected (H, W, 3) pixels, got {arr.shape}")
    h, w, _ = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(arr.tobytes())


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-centered bilinear resampling of an (H, W, C) float array."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[0], img.shape[1]
    if out_h < 1 or out_w < 1:
        raise InvalidShapeError("output dimensions must be >= 1")
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def image_to_input(pixels: np.ndarray, out_h: int, out_w: int) -> Tensor:
    """8-bit RGB -> [0, 1] floats resized to the model's input plane."""
    scaled = np.asarray(pixels, dtype=np.float64) / 255.0
    return Tensor(bilinear_resize(scaled, out_h, out_w).astype(np.float32))
