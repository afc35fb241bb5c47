"""Bit-exact serialization of one transmission block.

Layout (all multi-byte fields little-endian)::

    magic "SMRF" | version u8 | patch_size u8 | rows u16 | cols u16
    | n_levels u8 | n_levels x u16 byte budgets
    | packed resolution map, ceil(3P/8) bytes
    | patch payloads, row-major over nonzero cells
    | crc32 u32 over every preceding byte

Map packing: cell k occupies bit positions [3k, 3k+3), little-endian within
the byte stream (bit b lives in byte b >> 3 at in-byte position b & 7); the
final partial byte is zero padded and nonzero padding is rejected.

The parser is total: any byte string yields either a validated frame or a
FormatError subclass.  Integrity comes first: the trailing CRC is verified
before any header field is trusted, so flipping any payload, header, or CRC
bit of a valid frame surfaces as a checksum mismatch.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .allocator import RateTable, ResolutionMap
from .codec import EncodedPatch
from .errors import (
    BadMagicError,
    BadVersionError,
    ChecksumError,
    DimensionError,
    FieldValueError,
    ReservedBitsError,
    TrailingDataError,
    TruncatedError,
    ValidationError,
)

FRAME_MAGIC = b"SMRF"
FRAME_VERSION = 1
_FIXED = struct.Struct("<4sBBHHB")
MAX_FRAME_LEVELS = 8  # 3-bit map cells
_BITS_PER_CELL = 3


def map_section_len(n_patches: int) -> int:
    return (_BITS_PER_CELL * n_patches + 7) // 8


def header_len(table: RateTable) -> int:
    return _FIXED.size + 2 * table.n_levels


def frame_overhead(rows: int, cols: int, table: RateTable) -> int:
    """Frame bytes that are not patch payload: header + map + CRC."""
    return header_len(table) + map_section_len(rows * cols) + 4


def _check_frame_table(table: RateTable):
    if table.n_levels > MAX_FRAME_LEVELS:
        raise ValidationError(
            "frame map cells are 3 bits; at most %d levels" % MAX_FRAME_LEVELS
        )
    if table.top_bytes > 0xFFFF:
        raise ValidationError("byte budget exceeds the format's u16 range")


def build_frame(
    resolution_map: ResolutionMap,
    encoded: list[EncodedPatch],
    table: RateTable,
    patch_size: int,
) -> bytes:
    """Serialize one block; ``encoded`` lists the nonzero cells row-major."""
    _check_frame_table(table)
    resolution_map.validate_against(table)
    if not 1 <= patch_size <= 0xFF:
        raise ValidationError("patch size must fit u8 and be >= 1")
    if resolution_map.rows > 0xFFFF or resolution_map.cols > 0xFFFF:
        raise DimensionError("grid dims exceed the format's u16 range")

    flat = resolution_map.levels.ravel()
    nonzero = [int(v) for v in flat if v]
    if len(encoded) != len(nonzero):
        raise ValidationError(
            "map has %d nonzero cells, got %d payloads" % (len(nonzero), len(encoded))
        )
    for enc, level in zip(encoded, nonzero):
        if enc.level != level:
            raise ValidationError("payload level %d does not match map cell level %d" % (enc.level, level))
        if len(enc.payload) != table[level]:
            raise ValidationError(
                "payload is %d bytes, level %d needs %d" % (len(enc.payload), level, table[level])
            )

    acc = 0
    for k, v in enumerate(flat):
        acc |= int(v) << (_BITS_PER_CELL * k)
    packed = acc.to_bytes(map_section_len(flat.size), "little")

    head = _FIXED.pack(
        FRAME_MAGIC,
        FRAME_VERSION,
        patch_size,
        resolution_map.rows,
        resolution_map.cols,
        table.n_levels,
    )
    head += struct.pack("<%dH" % table.n_levels, *table.bytes_per_level)
    body = head + packed + b"".join(enc.payload for enc in encoded)
    return body + struct.pack("<I", zlib.crc32(body))


def parse_frame(data: bytes) -> tuple[ResolutionMap, list[EncodedPatch], RateTable, int]:
    """Parse one frame; returns (map, payloads, table, patch_size)."""
    if len(data) < _FIXED.size + 4:
        raise TruncatedError("too short for a frame header and CRC")
    (stored,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != stored:
        raise ChecksumError("CRC mismatch")

    magic, version, patch_size, rows, cols, n_levels = _FIXED.unpack_from(data)
    if magic != FRAME_MAGIC:
        raise BadMagicError("not a frame")
    if version != FRAME_VERSION:
        raise BadVersionError("unsupported frame version %d" % version)
    if patch_size == 0:
        raise FieldValueError("patch size must be >= 1")
    if rows == 0 or cols == 0:
        raise DimensionError("grid dims must be positive")
    if not 2 <= n_levels <= MAX_FRAME_LEVELS:
        raise FieldValueError("level count %d outside [2, %d]" % (n_levels, MAX_FRAME_LEVELS))

    off = _FIXED.size
    if len(data) - 4 < off + 2 * n_levels:
        raise TruncatedError("rate table incomplete")
    budgets = struct.unpack_from("<%dH" % n_levels, data, off)
    off += 2 * n_levels
    try:
        table = RateTable(budgets)
    except ValidationError as exc:
        raise FieldValueError("invalid inline rate table: %s" % exc) from None

    n_patches = rows * cols
    map_len = map_section_len(n_patches)
    if len(data) - 4 < off + map_len:
        raise TruncatedError("resolution map incomplete")
    acc = int.from_bytes(data[off: off + map_len], "little")
    off += map_len
    if acc >> (_BITS_PER_CELL * n_patches):
        raise ReservedBitsError("nonzero padding bits in the resolution map")
    levels = [(acc >> (_BITS_PER_CELL * k)) & 7 for k in range(n_patches)]
    if any(v >= n_levels for v in levels):
        raise FieldValueError("map cell level exceeds the table")

    payload_total = sum(table[v] for v in levels)
    expected = off + payload_total + 4
    if len(data) < expected:
        raise TruncatedError("payload section incomplete")
    if len(data) > expected:
        raise TrailingDataError("%d bytes beyond the frame" % (len(data) - expected))

    encoded = []
    for v in levels:
        if v:
            encoded.append(EncodedPatch(v, data[off: off + table[v]]))
            off += table[v]

    level_arr = np.array(levels, dtype=np.uint8).reshape(rows, cols)
    return ResolutionMap(rows, cols, level_arr), encoded, table, patch_size
