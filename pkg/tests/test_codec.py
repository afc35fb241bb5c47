"""Patch codec tests: layout goldens, exactness, nesting, and a second
straightforward implementation of the documented layout as the oracle."""

import numpy as np
import pytest

from semrate.allocator import RateTable
from semrate.codec import (
    EncodedPatch,
    coeffs_per_channel,
    decode_patch,
    encode_patch,
    patch_mse,
    zigzag_order,
)
from semrate.errors import ReservedBitsError, ValidationError

TABLE = RateTable()

# First 16 entries of the standard 8x8 JPEG zigzag scan.
JPEG_ZIGZAG_16 = [
    (0, 0), (0, 1), (1, 0), (2, 0), (1, 1), (0, 2), (0, 3), (1, 2),
    (2, 1), (3, 0), (4, 0), (3, 1), (2, 2), (1, 3), (0, 4), (0, 5),
]


def random_patch(rng):
    return rng.integers(0, 256, (3, 8, 8), dtype=np.uint8)


# ---------------------------------------------------------------------------
# Independent straightforward implementation of the documented payload layout
# (naive O(p^4) transform loops; coefficients snapped to 1/4096 before
# quantization, as the layout specifies).


def naive_dct2(plane):
    p = plane.shape[0]
    out = np.zeros((p, p))
    for u in range(p):
        for v in range(p):
            s = 0.0
            for i in range(p):
                for j in range(p):
                    s += (
                        plane[i, j]
                        * np.cos((2 * i + 1) * u * np.pi / (2 * p))
                        * np.cos((2 * j + 1) * v * np.pi / (2 * p))
                    )
            au = np.sqrt(1.0 / p) if u == 0 else np.sqrt(2.0 / p)
            av = np.sqrt(1.0 / p) if v == 0 else np.sqrt(2.0 / p)
            out[u, v] = au * av * s
    return out


def naive_idct2(coeffs):
    p = coeffs.shape[0]
    out = np.zeros((p, p))
    for i in range(p):
        for j in range(p):
            s = 0.0
            for u in range(p):
                for v in range(p):
                    au = np.sqrt(1.0 / p) if u == 0 else np.sqrt(2.0 / p)
                    av = np.sqrt(1.0 / p) if v == 0 else np.sqrt(2.0 / p)
                    s += (
                        au
                        * av
                        * coeffs[u, v]
                        * np.cos((2 * i + 1) * u * np.pi / (2 * p))
                        * np.cos((2 * j + 1) * v * np.pi / (2 * p))
                    )
            out[i, j] = s
    return out


def naive_encode(patch, level, table=TABLE):
    p = patch.shape[1]
    k = table[level] // 3
    order = zigzag_order(p)[:k]
    payload = b""
    for ch in range(3):
        coeffs = naive_dct2(patch[ch].astype(np.float64) - 128.0)
        kept = [float(np.round(coeffs[i, j] * 4096.0)) / 4096.0 for i, j in order]
        dc = int(np.clip(np.round(kept[0] / 8.0) + 128, 0, 255))
        acs = [int(np.clip(np.round(c / 2.0), -128, 127)) for c in kept[1:]]
        payload += bytes([dc]) + b"".join(
            int(a).to_bytes(1, "little", signed=True) for a in acs
        )
    return payload + bytes(table[level] - 3 * k)


def naive_decode(payload, level, table=TABLE, p=8):
    k = table[level] // 3
    order = zigzag_order(p)[:k]
    out = np.empty((3, p, p), dtype=np.uint8)
    for ch in range(3):
        chunk = payload[ch * k: (ch + 1) * k]
        coeffs = np.zeros((p, p))
        coeffs[order[0]] = (chunk[0] - 128) * 8.0
        for idx, (i, j) in enumerate(order[1:], start=1):
            coeffs[i, j] = int.from_bytes(chunk[idx: idx + 1], "little", signed=True) * 2.0
        out[ch] = np.clip(np.round(naive_idct2(coeffs) + 128.0), 0, 255).astype(np.uint8)
    return out


# ---------------------------------------------------------------------------


class TestZigzag:
    def test_jpeg_prefix(self):
        assert list(zigzag_order(8)[:16]) == JPEG_ZIGZAG_16

    @pytest.mark.parametrize("p", [1, 2, 3, 4, 8, 11])
    def test_covers_all_cells_once(self, p):
        order = zigzag_order(p)
        assert len(order) == p * p
        assert len(set(order)) == p * p

    def test_coeff_counts_default_table(self):
        assert [coeffs_per_channel(l, TABLE, 8) for l in (1, 2, 3)] == [4, 8, 16]


class TestExactness:
    def test_gray_patch_level1(self):
        gray = np.full((3, 8, 8), 128, dtype=np.uint8)
        enc = encode_patch(gray, 1, TABLE)
        assert enc.payload == bytes([0x80, 0, 0, 0]) * 3
        assert np.array_equal(decode_patch(enc, TABLE), gray)

    def test_uniform_patches_survive_level1(self):
        # DCT of a constant plane is DC-only, and DC quantizes on a multiple
        # of 8 only up to +-4 of the true value: error <= 4 after /8 rounding
        for value in (0, 7, 63, 128, 200, 255):
            patch = np.full((3, 8, 8), value, dtype=np.uint8)
            out = decode_patch(encode_patch(patch, 1, TABLE), TABLE)
            assert np.abs(out.astype(int) - int(value)).max() <= 4

    def test_level4_bit_exact(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            patch = random_patch(rng)
            enc = encode_patch(patch, 4, TABLE)
            assert len(enc.payload) == 196
            assert enc.payload[192:] == b"\x00" * 4
            assert np.array_equal(decode_patch(enc, TABLE), patch)

    def test_budget_exactness_all_levels(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            patch = random_patch(rng)
            for level in (1, 2, 3, 4):
                assert len(encode_patch(patch, level, TABLE).payload) == TABLE[level]


class TestNesting:
    def test_mse_monotone_in_level(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            patch = random_patch(rng)
            mses = [
                patch_mse(patch, decode_patch(encode_patch(patch, lvl, TABLE), TABLE))
                for lvl in (1, 2, 3, 4)
            ]
            assert mses[3] == 0.0
            for lo, hi in zip(mses, mses[1:]):
                assert hi <= lo

    def test_level3_not_worse_than_level1(self):
        rng = np.random.default_rng(3)
        patch = random_patch(rng)
        m1 = patch_mse(patch, decode_patch(encode_patch(patch, 1, TABLE), TABLE))
        m3 = patch_mse(patch, decode_patch(encode_patch(patch, 3, TABLE), TABLE))
        assert m3 <= m1


class TestOracle:
    def test_matches_naive_implementation(self):
        rng = np.random.default_rng(4)
        patches = [random_patch(rng) for _ in range(25)]
        # gradients and flats exercise the low-frequency paths
        ramp = np.linspace(0, 255, 64).reshape(8, 8)
        patches.append(np.stack([ramp, ramp.T, np.flipud(ramp)]).astype(np.uint8))
        patches.append(np.full((3, 8, 8), 77, dtype=np.uint8))
        for patch in patches:
            for level in (1, 2, 3):
                enc = encode_patch(patch, level, TABLE)
                assert enc.payload == naive_encode(patch, level)
                assert np.array_equal(
                    decode_patch(enc, TABLE), naive_decode(enc.payload, level)
                )


class TestReencoding:
    def test_constant_patch_one_shot_idempotent(self):
        for value in (0, 64, 128, 201, 255):
            patch = np.full((3, 8, 8), value, dtype=np.uint8)
            for level in (1, 2, 3):
                e1 = encode_patch(patch, level, TABLE)
                e2 = encode_patch(decode_patch(e1, TABLE), level, TABLE)
                assert e2.payload == e1.payload

    def test_reencoding_reaches_payload_fixed_point(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            patch = random_patch(rng)
            for level in (1, 2, 3):
                payload = encode_patch(patch, level, TABLE).payload
                for _ in range(32):
                    nxt = encode_patch(
                        decode_patch(EncodedPatch(level, payload), TABLE), level, TABLE
                    ).payload
                    if nxt == payload:
                        break
                    payload = nxt
                else:
                    pytest.fail("re-encoding did not reach a fixed point")
                # at the fixed point one more round trip is the identity
                again = encode_patch(
                    decode_patch(EncodedPatch(level, payload), TABLE), level, TABLE
                ).payload
                assert again == payload


class TestErrors:
    def test_level_zero(self):
        with pytest.raises(ValidationError):
            encode_patch(np.zeros((3, 8, 8), dtype=np.uint8), 0, TABLE)

    def test_unknown_level(self):
        with pytest.raises(ValidationError):
            encode_patch(np.zeros((3, 8, 8), dtype=np.uint8), 5, TABLE)
        with pytest.raises(ValidationError):
            decode_patch(EncodedPatch(9, b"\x00" * 12), TABLE)

    def test_payload_length_mismatch(self):
        with pytest.raises(ValidationError):
            decode_patch(EncodedPatch(1, b"\x00" * 11), TABLE)

    def test_nonzero_pad_rejected(self):
        rng = np.random.default_rng(6)
        enc = encode_patch(random_patch(rng), 4, TABLE)
        bad = enc.payload[:-1] + b"\x01"
        with pytest.raises(ReservedBitsError):
            decode_patch(EncodedPatch(4, bad), TABLE)

    def test_patch_shape_and_dtype(self):
        with pytest.raises(ValidationError):
            encode_patch(np.zeros((3, 8, 8), dtype=np.int32), 1, TABLE)
        with pytest.raises(ValidationError):
            encode_patch(np.zeros((1, 8, 8), dtype=np.uint8), 1, TABLE)
        with pytest.raises(ValidationError):
            encode_patch(np.zeros((3, 8, 4), dtype=np.uint8), 1, TABLE)

    def test_table_too_small_for_raw_top(self):
        small = RateTable((0, 12, 100))
        with pytest.raises(ValidationError):
            encode_patch(np.zeros((3, 8, 8), dtype=np.uint8), 1, small)

    def test_intermediate_budget_below_one_dc_byte(self):
        tiny = RateTable((0, 2, 400))
        with pytest.raises(ValidationError):
            encode_patch(np.zeros((3, 8, 8), dtype=np.uint8), 1, tiny)


class TestCustomTableAndPadding:
    def test_padded_intermediate_level(self):
        # 14 bytes -> k=4 coefficients per channel + 2 zero pad bytes
        table = RateTable((0, 14, 400))
        rng = np.random.default_rng(7)
        patch = random_patch(rng)
        enc = encode_patch(patch, 1, table)
        assert len(enc.payload) == 14
        assert enc.payload[12:] == b"\x00\x00"
        decode_patch(enc, table)  # round-trips without error

    def test_top_level_pad_validated(self):
        table = RateTable((0, 12, 200))
        rng = np.random.default_rng(8)
        patch = random_patch(rng)
        enc = encode_patch(patch, 2, table)
        assert len(enc.payload) == 200
        assert np.array_equal(decode_patch(enc, table), patch)
