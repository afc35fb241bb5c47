"""Frame format: round trips, bit-level layout goldens, and parser totality."""

import struct
import zlib

import numpy as np
import pytest

from semrate.allocator import DEFAULT_TABLE, RateTable, ResolutionMap
from semrate.codec import EncodedPatch, encode_patch
from semrate.errors import (
    BadMagicError,
    BadVersionError,
    ChecksumError,
    DimensionError,
    FieldValueError,
    FormatError,
    ReservedBitsError,
    TrailingDataError,
    TruncatedError,
    ValidationError,
)
from semrate.frame import build_frame, frame_overhead, header_len, map_section_len, parse_frame


def make_map(levels):
    arr = np.asarray(levels, dtype=np.uint8)
    return ResolutionMap(arr.shape[0], arr.shape[1], arr)


def payloads_for(resolution_map, table=DEFAULT_TABLE, fill=0x5A):
    out = []
    for level in resolution_map.levels.ravel():
        if level:
            out.append(EncodedPatch(int(level), bytes([fill]) * table[int(level)]))
    return out


def recrc(body_without_crc: bytes) -> bytes:
    return body_without_crc + struct.pack("<I", zlib.crc32(body_without_crc))


def random_frame(rng, table=DEFAULT_TABLE):
    rows, cols = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    levels = rng.integers(0, table.n_levels, (rows, cols)).astype(np.uint8)
    rmap = make_map(levels)
    payloads = [
        EncodedPatch(int(v), rng.bytes(table[int(v)]))
        for v in levels.ravel()
        if v
    ]
    p = int(rng.integers(1, 17))
    return rmap, payloads, p


class TestRoundTrip:
    def test_all_zero_map_has_empty_payload_section(self):
        rmap = make_map([[0]])
        frame = build_frame(rmap, [], DEFAULT_TABLE, 8)
        assert len(frame) == frame_overhead(1, 1, DEFAULT_TABLE)
        back_map, encoded, table, p = parse_frame(frame)
        assert back_map == rmap
        assert encoded == []
        assert table == DEFAULT_TABLE
        assert p == 8

    def test_payload_order_and_lengths(self):
        rmap = make_map([[1, 4]])
        payloads = [EncodedPatch(1, b"\x01" * 12), EncodedPatch(4, b"\x02" * 196)]
        frame = build_frame(rmap, payloads, DEFAULT_TABLE, 8)
        start = header_len(DEFAULT_TABLE) + map_section_len(2)
        assert frame[start: start + 12] == b"\x01" * 12
        assert frame[start + 12: start + 208] == b"\x02" * 196
        _, encoded, _, _ = parse_frame(frame)
        assert [e.level for e in encoded] == [1, 4]

    def test_random_round_trips(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            rmap, payloads, p = random_frame(rng)
            frame = build_frame(rmap, payloads, DEFAULT_TABLE, p)
            back_map, encoded, table, back_p = parse_frame(frame)
            assert back_map == rmap
            assert encoded == payloads
            assert table == DEFAULT_TABLE
            assert back_p == p

    def test_frame_size_arithmetic(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            rmap, payloads, p = random_frame(rng)
            frame = build_frame(rmap, payloads, DEFAULT_TABLE, p)
            n = rmap.levels.size
            expect = (
                header_len(DEFAULT_TABLE)
                + (3 * n + 7) // 8
                + sum(len(e.payload) for e in payloads)
                + 4
            )
            assert len(frame) == expect


class TestBitLayout:
    def test_header_golden(self):
        rmap = make_map([[0]])
        frame = build_frame(rmap, [], DEFAULT_TABLE, 8)
        assert frame[:4] == b"SMRF"
        assert frame[4] == 1  # version
        assert frame[5] == 8  # patch size
        assert frame[6:8] == b"\x01\x00"  # rows
        assert frame[8:10] == b"\x01\x00"  # cols
        assert frame[10] == 5  # levels
        assert frame[11:21] == struct.pack("<5H", 0, 12, 24, 48, 196)

    def test_map_packing_little_endian_3bit(self):
        # cells [1, 2, 3] -> 1 | 2<<3 | 3<<6 = 0xD1, 0x00
        rmap = make_map([[1, 2, 3]])
        frame = build_frame(rmap, payloads_for(rmap), DEFAULT_TABLE, 8)
        off = header_len(DEFAULT_TABLE)
        assert frame[off: off + 2] == bytes([0xD1, 0x00])

    def test_crc_is_ieee_crc32_of_preceding_bytes(self):
        rmap = make_map([[2]])
        frame = build_frame(rmap, payloads_for(rmap), DEFAULT_TABLE, 8)
        (stored,) = struct.unpack("<I", frame[-4:])
        assert stored == zlib.crc32(frame[:-4])


class TestParserTotality:
    def test_single_bit_flip_always_checksum_error(self):
        rmap = make_map([[1, 2], [0, 3]])
        frame = build_frame(rmap, payloads_for(rmap), DEFAULT_TABLE, 8)
        assert len(frame) <= 1024
        for byte_index in range(len(frame)):
            for bit in range(8):
                flipped = bytearray(frame)
                flipped[byte_index] ^= 1 << bit
                with pytest.raises(ChecksumError):
                    parse_frame(bytes(flipped))

    def test_random_bytes_never_crash(self):
        rng = np.random.default_rng(13)
        for _ in range(10_000):
            blob = rng.bytes(int(rng.integers(0, 80)))
            with pytest.raises(FormatError):
                parse_frame(blob)

    def test_truncated_short_input(self):
        with pytest.raises(TruncatedError):
            parse_frame(b"SMRF")


class TestCraftedErrors:
    """Each distinct error category, reached through CRC-valid frames."""

    def _valid_frame(self):
        rmap = make_map([[1]])
        return build_frame(rmap, payloads_for(rmap), DEFAULT_TABLE, 8)

    def test_bad_magic(self):
        frame = bytearray(self._valid_frame())
        frame[:4] = b"JUNK"
        with pytest.raises(BadMagicError):
            parse_frame(recrc(bytes(frame[:-4])))

    def test_bad_version(self):
        frame = bytearray(self._valid_frame())
        frame[4] = 2
        with pytest.raises(BadVersionError):
            parse_frame(recrc(bytes(frame[:-4])))

    def test_zero_patch_size(self):
        frame = bytearray(self._valid_frame())
        frame[5] = 0
        with pytest.raises(FieldValueError):
            parse_frame(recrc(bytes(frame[:-4])))

    def test_zero_rows(self):
        frame = bytearray(self._valid_frame())
        frame[6:8] = b"\x00\x00"
        with pytest.raises(DimensionError):
            parse_frame(recrc(bytes(frame[:-4])))

    def test_bad_level_count(self):
        frame = bytearray(self._valid_frame())
        frame[10] = 1
        with pytest.raises(FieldValueError):
            parse_frame(recrc(bytes(frame[:-4])))
        frame[10] = 9
        with pytest.raises(FieldValueError):
            parse_frame(recrc(bytes(frame[:-4])))

    def test_non_increasing_table(self):
        frame = bytearray(self._valid_frame())
        frame[11:21] = struct.pack("<5H", 0, 12, 12, 48, 196)
        with pytest.raises(FieldValueError):
            parse_frame(recrc(bytes(frame[:-4])))

    def test_nonzero_map_padding_bits(self):
        frame = bytearray(self._valid_frame())
        off = header_len(DEFAULT_TABLE)
        frame[off] |= 0x08  # bit 3 is padding for a single 3-bit cell
        with pytest.raises(ReservedBitsError):
            parse_frame(recrc(bytes(frame[:-4])))

    def test_map_level_beyond_table(self):
        frame = bytearray(self._valid_frame())
        off = header_len(DEFAULT_TABLE)
        frame[off] = 0x07  # level 7 with a 5-level table
        body = bytes(frame[:off + 1])
        with pytest.raises(FieldValueError):
            parse_frame(recrc(body))

    def test_truncated_payload_section(self):
        frame = self._valid_frame()
        with pytest.raises(TruncatedError):
            parse_frame(recrc(frame[:-5]))

    def test_trailing_bytes(self):
        frame = self._valid_frame()
        with pytest.raises(TrailingDataError):
            parse_frame(recrc(frame[:-4] + b"\x00"))

    def test_checksum_error_reachable(self):
        frame = bytearray(self._valid_frame())
        frame[-1] ^= 0xFF
        with pytest.raises(ChecksumError):
            parse_frame(bytes(frame))


class TestBuildValidation:
    def test_payload_count_mismatch(self):
        rmap = make_map([[1, 1]])
        with pytest.raises(ValidationError):
            build_frame(rmap, [EncodedPatch(1, b"\x00" * 12)], DEFAULT_TABLE, 8)

    def test_payload_level_mismatch(self):
        rmap = make_map([[1]])
        with pytest.raises(ValidationError):
            build_frame(rmap, [EncodedPatch(2, b"\x00" * 24)], DEFAULT_TABLE, 8)

    def test_payload_length_mismatch(self):
        rmap = make_map([[1]])
        with pytest.raises(ValidationError):
            build_frame(rmap, [EncodedPatch(1, b"\x00" * 13)], DEFAULT_TABLE, 8)

    def test_too_many_levels_for_3bit_cells(self):
        table = RateTable(tuple(range(0, 9 * 12, 12)))
        rmap = ResolutionMap(1, 1, np.array([[0]], dtype=np.uint8))
        with pytest.raises(ValidationError):
            build_frame(rmap, [], table, 8)

    def test_budget_beyond_u16(self):
        table = RateTable((0, 70000))
        rmap = make_map([[0]])
        with pytest.raises(ValidationError):
            build_frame(rmap, [], table, 8)

    def test_map_level_beyond_table_on_build(self):
        rmap = make_map([[6]])
        with pytest.raises(ValidationError):
            build_frame(rmap, [EncodedPatch(6, b"")], DEFAULT_TABLE, 8)

    def test_patch_size_range(self):
        rmap = make_map([[0]])
        with pytest.raises(ValidationError):
            build_frame(rmap, [], DEFAULT_TABLE, 0)
        with pytest.raises(ValidationError):
            build_frame(rmap, [], DEFAULT_TABLE, 256)


def test_round_trip_with_real_codec_payloads():
    rng = np.random.default_rng(14)
    rmap = make_map([[1, 4], [0, 2]])
    payloads = []
    for level in (1, 4, 2):
        patch = rng.integers(0, 256, (3, 8, 8), dtype=np.uint8)
        payloads.append(encode_patch(patch, level, DEFAULT_TABLE))
    frame = build_frame(rmap, payloads, DEFAULT_TABLE, 8)
    back_map, encoded, _, _ = parse_frame(frame)
    assert back_map == rmap
    assert encoded == payloads
