"""Wire-format glue: the ATTN grid file and PPM images.

These reimplement the published interchange contracts so the sidecar stays
decoupled from the main toolkit's code: ATTN is magic "ATTN", version 1,
rows/cols u16 LE, then rows*cols f32 LE row-major; images travel as binary
PPM (P6, maxval 255).
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image

ATTN_MAGIC = b"ATTN"
_ATTN_HEADER = struct.Struct("<4sBHH")


def write_attn(path, grid: np.ndarray):
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2 or min(grid.shape) < 1:
        raise ValueError("grid must be a non-empty 2-D array")
    if not np.isfinite(grid).all() or (grid < 0).any():
        raise ValueError("grid values must be finite and >= 0")
    rows, cols = grid.shape
    payload = grid.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_ATTN_HEADER.pack(ATTN_MAGIC, 1, rows, cols) + payload)


def read_attn(path) -> np.ndarray:
    data = open(path, "rb").read()
    magic, version, rows, cols = _ATTN_HEADER.unpack_from(data)
    if magic != ATTN_MAGIC or version != 1:
        raise ValueError("not a version-1 ATTN file")
    if len(data) != _ATTN_HEADER.size + 4 * rows * cols:
        raise ValueError("ATTN payload length mismatch")
    values = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=_ATTN_HEADER.size)
    return values.astype(np.float64).reshape(rows, cols)


def load_image(path) -> np.ndarray:
    """Any Pillow-readable image as (H, W, 3) uint8."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def save_ppm(path, image: np.ndarray):
    image = np.ascontiguousarray(image, dtype=np.uint8)
    h, w = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h) + image.tobytes())


def resize_image(image: np.ndarray, target_hw: tuple[int, int]) -> np.ndarray:
    """Bilinear resize to (H, W)."""
    h, w = target_hw
    with Image.fromarray(image) as img:
        return np.asarray(img.resize((w, h), Image.BILINEAR), dtype=np.uint8)
