"""Budget-exact per-level patch codecs.

Levels 1..L-2 are truncated-DCT codecs: per color channel, the orthonormal
2-D DCT-II of the centered (pixel - 128) plane is computed, the first k
coefficients in JPEG zigzag order are kept (k = level_bytes // 3, so the
default table gives k = 4/8/16 for 12/24/48 bytes), the DC is stored as
``round(dc / 8) + 128`` in one unsigned byte and each AC as
``round(ac / 2)`` clamped to a signed byte.  The top level is a raw
passthrough of the 3*p*p pixels padded with zero bytes up to its budget
(196 = 192 + 4 for the default table).

Because every level keeps a superset of the previous level's coefficients
under identical quantizers, per-patch reconstruction error is non-increasing
in the level; the top level is bit-exact.

Before quantization every kept coefficient is snapped to a 1/4096
fixed-point grid.  Several DCT-II values of integer pixels are exact
rationals (the DC is sum/8; positions like (4,0) collapse to signed pixel
sums over 8) and land exactly on quantizer half-boundaries, where two
float transforms that differ by an ulp would round apart.  The snap absorbs
transform round-off while representing those rationals exactly, so payloads
are reproducible by any straightforward reimplementation of this layout.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .allocator import DEFAULT_TABLE, RateTable
from .errors import ReservedBitsError, ValidationError

CHANNELS = 3
DC_STEP = 8.0
AC_STEP = 2.0
PIXEL_OFFSET = 128.0
# Fixed-point snap denominator: far above transform round-off (~1e-10 abs),
# far below the quantizer steps, and a power of two so exact-rational
# coefficients (multiples of 1/8) are preserved exactly.
SNAP = 4096.0


@dataclass(frozen=True)
class EncodedPatch:
    """One patch's wire unit: a level index plus its exact-budget payload."""

    level: int
    payload: bytes


@lru_cache(maxsize=8)
def zigzag_order(p: int):
    """(row, col) visiting order of the standard JPEG zigzag scan for p x p."""
    out = []
    for s in range(2 * p - 1):
        lo = max(0, s - p + 1)
        hi = min(s, p - 1)
        rng = range(hi, lo - 1, -1) if s % 2 == 0 else range(lo, hi + 1)
        out.extend((i, s - i) for i in rng)
    return tuple(out)


@lru_cache(maxsize=8)
def _dct_matrix(p: int) -> np.ndarray:
    j = np.arange(p)
    c = np.sqrt(2.0 / p) * np.cos((2 * j[None, :] + 1) * j[:, None] * np.pi / (2 * p))
    c[0, :] = np.sqrt(1.0 / p)
    c.setflags(write=False)
    return c


def _dct2(plane: np.ndarray) -> np.ndarray:
    c = _dct_matrix(plane.shape[0])
    return c @ plane @ c.T


def _idct2(coeffs: np.ndarray) -> np.ndarray:
    c = _dct_matrix(coeffs.shape[0])
    return c.T @ coeffs @ c


def coeffs_per_channel(level: int, table: RateTable, p: int) -> int:
    """How many zigzag coefficients an intermediate level keeps per channel."""
    return min(table[level] // CHANNELS, p * p)


def _check_table_for_patch(table: RateTable, p: int):
    if table.top_bytes < CHANNELS * p * p:
        raise ValidationError(
            "top level must fit a raw %dx%d patch (%d bytes)" % (p, p, CHANNELS * p * p)
        )
    for level in range(1, table.n_levels - 1):
        if coeffs_per_channel(level, table, p) < 1:
            raise ValidationError("level %d budget too small for one DC byte per channel" % level)


def _check_patch(patch: np.ndarray) -> np.ndarray:
    arr = np.asarray(patch)
    if arr.ndim != 3 or arr.shape[0] != CHANNELS or arr.shape[1] != arr.shape[2]:
        raise ValidationError("patch must have shape (3, p, p), got %r" % (arr.shape,))
    if arr.shape[1] < 1:
        raise ValidationError("patch side must be >= 1")
    if arr.dtype != np.uint8:
        raise ValidationError("patch pixels must be uint8")
    return arr


def encode_patch(
    patch: np.ndarray, level: int, table: RateTable = DEFAULT_TABLE
) -> EncodedPatch:
    """Encode one (3, p, p) uint8 patch at a nonzero level.

    The payload length equals the table's byte budget for the level exactly.
    """
    arr = _check_patch(patch)
    p = arr.shape[1]
    if level == 0:
        raise ValidationError("level 0 drops the patch; nothing to encode")
    if not 1 <= level < table.n_levels:
        raise ValidationError("unknown level %d for a %d-level table" % (level, table.n_levels))
    _check_table_for_patch(table, p)
    budget = table[level]

    if level == table.n_levels - 1:
        payload = arr.tobytes() + bytes(budget - CHANNELS * p * p)
        return EncodedPatch(level, payload)

    k = coeffs_per_channel(level, table, p)
    order = zigzag_order(p)[:k]
    rows = [i for i, _ in order]
    cols = [j for _, j in order]
    parts = []
    for ch in range(CHANNELS):
        coeffs = _dct2(arr[ch].astype(np.float64) - PIXEL_OFFSET)
        kept = np.round(coeffs[rows, cols] * SNAP) / SNAP
        dc = int(np.clip(np.round(kept[0] / DC_STEP) + 128, 0, 255))
        acs = np.clip(np.round(kept[1:] / AC_STEP), -128, 127).astype(np.int8)
        parts.append(bytes([dc]) + acs.tobytes())
    payload = b"".join(parts) + bytes(budget - CHANNELS * k)
    return EncodedPatch(level, payload)


def decode_patch(
    enc: EncodedPatch, table: RateTable = DEFAULT_TABLE, patch_size: int = 8
) -> np.ndarray:
    """Decode a payload back to a (3, p, p) uint8 patch.

    Inverse quantization, inverse DCT, re-offset by 128, round, clamp to
    [0, 255].  The top level is an exact passthrough.  Zero padding bytes
    are validated: a nonzero pad byte is a format error.
    """
    p = patch_size
    if p < 1:
        raise ValidationError("patch size must be >= 1")
    if not 1 <= enc.level < table.n_levels:
        raise ValidationError("unknown level %d for a %d-level table" % (enc.level, table.n_levels))
    _check_table_for_patch(table, p)
    budget = table[enc.level]
    if len(enc.payload) != budget:
        raise ValidationError(
            "payload is %d bytes, level %d needs exactly %d"
            % (len(enc.payload), enc.level, budget)
        )

    if enc.level == table.n_levels - 1:
        raw = enc.payload[: CHANNELS * p * p]
        if any(enc.payload[CHANNELS * p * p:]):
            raise ReservedBitsError("nonzero pad byte in raw-level payload")
        return np.frombuffer(raw, dtype=np.uint8).reshape(CHANNELS, p, p).copy()

    k = coeffs_per_channel(enc.level, table, p)
    if any(enc.payload[CHANNELS * k:]):
        raise ReservedBitsError("nonzero pad byte in payload")
    order = zigzag_order(p)[:k]
    rows = [i for i, _ in order]
    cols = [j for _, j in order]
    out = np.empty((CHANNELS, p, p), dtype=np.uint8)
    for ch in range(CHANNELS):
        chunk = enc.payload[ch * k: (ch + 1) * k]
        coeffs = np.zeros((p, p))
        kept = np.empty(k)
        kept[0] = (chunk[0] - 128) * DC_STEP
        if k > 1:
            kept[1:] = np.frombuffer(chunk, dtype=np.int8, offset=1).astype(np.float64) * AC_STEP
        coeffs[rows, cols] = kept
        plane = _idct2(coeffs) + PIXEL_OFFSET
        out[ch] = np.clip(np.round(plane), 0, 255).astype(np.uint8)
    return out


def patch_mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared error between two uint8 patches."""
    if a.shape != b.shape:
        raise ValidationError("patch shapes differ: %r vs %r" % (a.shape, b.shape))
    d = a.astype(np.float64) - b.astype(np.float64)
    return float(np.mean(d * d))
