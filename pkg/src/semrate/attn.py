"""Attention grids: aggregation, file format, and synthetic generators.

An attention grid holds one non-negative relevance score per image patch on
an (H/p) x (W/p) grid, row-major.  Grids come from three places: averaging
the per-head classification-token attention rows of a vision transformer,
reading the portable ATTN file format, or the synthetic generators used by
tests and the bundled corpus builder.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    BadVersionError,
    DimensionError,
    NonFiniteValueError,
    TrailingDataError,
    TruncatedError,
    ValidationError,
)

ATTN_MAGIC = b"ATTN"
ATTN_VERSION = 1
_HEADER = struct.Struct("<4sBHH")

# Softmax rows sum to 1; allow a little slack for f32 transport.
ROW_SUM_TOLERANCE = 1e-4


@dataclass(frozen=True)
class AttentionGrid:
    """Per-patch semantic relevance scores, row-major, finite and >= 0."""

    rows: int
    cols: int
    values: np.ndarray = field(compare=False)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValidationError("grid dims must be positive")
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        if arr.shape != (self.rows, self.cols):
            raise ValidationError(
                "value shape %r does not match %dx%d" % (arr.shape, self.rows, self.cols)
            )
        if not np.isfinite(arr).all():
            raise ValidationError("attention values must be finite")
        if (arr < 0).any():
            raise ValidationError("attention values must be >= 0")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __eq__(self, other):
        return (
            isinstance(other, AttentionGrid)
            and self.rows == other.rows
            and self.cols == other.cols
            and np.array_equal(self.values, other.values)
        )

    @property
    def n_patches(self) -> int:
        return self.rows * self.cols

    @classmethod
    def from_array(cls, values) -> "AttentionGrid":
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValidationError("attention grid must be 2-D")
        return cls(arr.shape[0], arr.shape[1], arr)


@dataclass(frozen=True)
class HeadAttentionRows:
    """Per-head CLS attention rows of length 1+P (index 0 is CLS->CLS)."""

    values: np.ndarray = field(compare=False)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValidationError("head rows must be a 2-D (n_heads, 1+P) array")
        if arr.shape[0] < 1:
            raise ValidationError("need at least one head")
        if arr.shape[1] < 2:
            raise ValidationError("rows must hold the CLS entry plus >= 1 patch")
        if not np.isfinite(arr).all():
            raise ValidationError("attention rows must be finite")
        if (arr < 0).any() or (arr > 1).any():
            raise ValidationError("attention rows must lie in [0, 1]")
        sums = arr.sum(axis=1)
        if (sums > 1 + ROW_SUM_TOLERANCE).any():
            raise ValidationError("softmax rows must sum to <= 1 (+tolerance)")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n_heads(self) -> int:
        return self.values.shape[0]

    @property
    def row_len(self) -> int:
        return self.values.shape[1]


def aggregate(heads: HeadAttentionRows, rows: int, cols: int) -> AttentionGrid:
    """Average the per-head CLS rows into one grid.

    Drops the CLS->CLS entry (index 0) and takes the per-patch mean over
    heads without renormalizing; the allocator renormalizes by the grid sum
    anyway.  The mean is computed as ``head0 + fsum(head_h - head0) / H`` per
    cell, which is exact when all heads agree and is unaffected by the order
    of the patch entries.
    """
    if rows < 1 or cols < 1:
        raise ValidationError("grid dims must be positive")
    patch = heads.values[:, 1:]
    if rows * cols != patch.shape[1]:
        raise ValidationError(
            "rows*cols = %d does not match P = %d" % (rows * cols, patch.shape[1])
        )
    base = patch[0]
    dev = patch - base
    n_heads = heads.n_heads
    mean = base + np.array(
        [math.fsum(dev[:, j].tolist()) for j in range(patch.shape[1])]
    ) / n_heads
    return AttentionGrid(rows, cols, mean.reshape(rows, cols))


def write_attn_file(grid: AttentionGrid) -> bytes:
    """Serialize a grid to the ATTN format (f32 little-endian payload)."""
    if grid.rows > 0xFFFF or grid.cols > 0xFFFF:
        raise DimensionError("grid dims exceed the format's u16 range")
    with np.errstate(over="ignore"):
        payload = grid.values.astype("<f4")
    if not np.isfinite(payload).all():
        raise NonFiniteValueError("grid value overflows 32-bit float range")
    return _HEADER.pack(ATTN_MAGIC, ATTN_VERSION, grid.rows, grid.cols) + payload.tobytes()


def read_attn_file(data: bytes) -> AttentionGrid:
    """Parse ATTN bytes; total over arbitrary input, raising FormatError only."""
    if len(data) < 4:
        raise TruncatedError("shorter than the magic")
    if data[:4] != ATTN_MAGIC:
        raise BadMagicError("not an ATTN file")
    if len(data) < _HEADER.size:
        raise TruncatedError("header incomplete")
    _, version, rows, cols = _HEADER.unpack_from(data)
    if version != ATTN_VERSION:
        raise BadVersionError("unsupported ATTN version %d" % version)
    if rows == 0 or cols == 0:
        raise DimensionError("grid dims must be positive")
    expected = _HEADER.size + 4 * rows * cols
    if len(data) < expected:
        raise TruncatedError(
            "payload needs %d bytes, have %d" % (expected, len(data))
        )
    if len(data) > expected:
        raise TrailingDataError("%d trailing bytes" % (len(data) - expected))
    values = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=_HEADER.size)
    values = values.astype(np.float64).reshape(rows, cols)
    if not np.isfinite(values).all():
        raise NonFiniteValueError("stored attention value is not finite")
    if (values < 0).any():
        raise NonFiniteValueError("stored attention value is negative")
    return AttentionGrid(rows, cols, values)


def synth_attention(
    kind: str,
    rows: int,
    cols: int,
    *,
    cell: int | None = None,
    center: tuple[float, float] | None = None,
    sigma: float | None = None,
    seed: int | None = None,
) -> AttentionGrid:
    """Generate a synthetic attention field.

    Kinds: ``uniform`` (all cells 1/P), ``dirac`` (1.0 at flat index ``cell``),
    ``gaussian_blob`` (unnormalized Gaussian of width ``sigma`` over cell
    coordinates, centered at ``center`` = (row, col)).  All kinds are fully
    deterministic; ``seed`` is accepted for API uniformity with the other
    generators and currently unused.
    """
    del seed
    if rows < 1 or cols < 1:
        raise ValidationError("grid dims must be positive")
    if kind == "uniform":
        values = np.full((rows, cols), 1.0 / (rows * cols))
    elif kind == "dirac":
        if cell is None or not 0 <= cell < rows * cols:
            raise ValidationError("dirac needs a flat cell index in range")
        values = np.zeros(rows * cols)
        values[cell] = 1.0
        values = values.reshape(rows, cols)
    elif kind == "gaussian_blob":
        if center is None or sigma is None or sigma <= 0:
            raise ValidationError("gaussian_blob needs a center and sigma > 0")
        r = np.arange(rows, dtype=np.float64)[:, None]
        c = np.arange(cols, dtype=np.float64)[None, :]
        d2 = (r - center[0]) ** 2 + (c - center[1]) ** 2
        values = np.exp(-d2 / (2.0 * sigma * sigma))
    else:
        raise ValidationError("unknown attention kind %r" % kind)
    return AttentionGrid(rows, cols, values)
