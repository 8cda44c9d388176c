"""File formats for rasters.

Two on-disk encodings are supported and auto-detected by magic bytes:

* 8-bit grayscale PNG, pixel value v mapping to probability v / 255;
* "SRF1" float rasters: the 4 magic bytes ``SRF1``, little-endian uint32
  width and height, then width*height little-endian float32 values in
  row-major order. This keeps probabilities exact where PNG would quantize.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import PIL.Image

from .masks import BinaryMask, Image, SoftMask

SRF_MAGIC = b"SRF1"
_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def save_png(path, values: np.ndarray) -> None:
    """Write a [0, 1] float raster as 8-bit grayscale PNG."""
    arr = np.asarray(values, dtype=float)
    quantized = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    PIL.Image.fromarray(quantized, mode="L").save(Path(path), format="PNG")


def save_srf(path, values: np.ndarray) -> None:
    """Write a [0, 1] float raster in the SRF1 format."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D raster, got shape {arr.shape}")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(SRF_MAGIC)
        fh.write(struct.pack("<II", w, h))
        fh.write(arr.astype("<f4").tobytes(order="C"))


def load_raster(path) -> np.ndarray:
    """Read a PNG or SRF1 file into a float64 array in [0, 1]."""
    data = Path(path).read_bytes()
    if data[:4] == SRF_MAGIC:
        if len(data) < 12:
            raise ValueError(f"{path}: truncated SRF header")
        w, h = struct.unpack("<II", data[4:12])
        expected = 12 + 4 * w * h
        if len(data) != expected:
            raise ValueError(f"{path}: SRF payload is {len(data)} bytes, expected {expected}")
        arr = np.frombuffer(data, dtype="<f4", offset=12).reshape(h, w).astype(float)
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError(f"{path}: SRF values must be finite and in [0, 1]")
        return arr
    if data[:8] == _PNG_MAGIC:
        with PIL.Image.open(Path(path)) as img:
            gray = img.convert("L")
            return np.asarray(gray, dtype=float) / 255.0
    raise ValueError(f"{path}: unrecognized raster format (need PNG or SRF1)")


def load_soft_mask(path) -> SoftMask:
    return SoftMask(load_raster(path))


def load_binary_mask(path, threshold: float = 0.5) -> BinaryMask:
    """Read a mask file, treating values >= threshold as foreground."""
    return BinaryMask(load_raster(path) >= threshold)


def load_image(path) -> Image:
    return Image(load_raster(path))
