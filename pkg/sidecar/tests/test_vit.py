"""Transformer forward pass: shapes, softmax structure, determinism."""

import numpy as np
import pytest

from vit_sidecar.vit import (
    VitConfig,
    cls_attention_rows,
    init_weights,
    interpolate_pos_embed,
    load_weights,
    patchify,
    save_weights,
    sincos_pos_embed,
)

TINY = VitConfig(patch_size=4, embed_dim=32, depth=2, n_heads=4)


def tiny_images(rng, b=2, h=16, w=24):
    return rng.integers(0, 256, (b, h, w, 3), dtype=np.uint8).astype(np.float32) / 255.0


class TestConfig:
    def test_head_dim(self):
        assert TINY.head_dim == 8

    def test_validation(self):
        with pytest.raises(ValueError):
            VitConfig(embed_dim=30, n_heads=4)
        with pytest.raises(ValueError):
            VitConfig(depth=0)


class TestForward:
    def test_rows_are_softmax(self):
        rng = np.random.default_rng(0)
        weights = init_weights(TINY, 1)
        rows = cls_attention_rows(tiny_images(rng), weights, TINY)
        assert rows.shape == (2, 4, 1 + (16 // 4) * (24 // 4))
        assert rows.min() >= 0.0
        assert np.allclose(rows.sum(axis=-1), 1.0, atol=1e-5)

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        images = tiny_images(rng)
        weights = init_weights(TINY, 2)
        a = cls_attention_rows(images, weights, TINY)
        b = cls_attention_rows(images, weights, TINY)
        assert np.array_equal(a, b)

    def test_weights_seeded(self):
        w1 = init_weights(TINY, 3)
        w2 = init_weights(TINY, 3)
        w3 = init_weights(TINY, 4)
        assert all(np.array_equal(w1[k], w2[k]) for k in w1)
        assert any(not np.array_equal(w1[k], w3[k]) for k in w1)

    def test_input_sensitivity(self):
        rng = np.random.default_rng(2)
        weights = init_weights(TINY, 5)
        a = cls_attention_rows(tiny_images(rng), weights, TINY)
        b = cls_attention_rows(tiny_images(rng), weights, TINY)
        assert not np.array_equal(a, b)

    def test_bad_dims_rejected(self):
        weights = init_weights(TINY, 6)
        with pytest.raises(ValueError):
            cls_attention_rows(np.zeros((1, 15, 16, 3), np.float32), weights, TINY)


class TestWeightsIo:
    def test_round_trip(self, tmp_path):
        weights = init_weights(TINY, 7)
        path = tmp_path / "w.npz"
        save_weights(path, weights)
        back = load_weights(path)
        assert set(back) == set(weights)
        assert all(np.array_equal(back[k], weights[k]) for k in weights)


class TestPosEmbed:
    def test_sincos_shape_and_cls_zero(self):
        pos = sincos_pos_embed(3, 5, 32)
        assert pos.shape == (16, 32)
        assert (pos[0] == 0).all()
        assert np.abs(pos).max() <= 0.02 + 1e-9

    def test_interpolation_identity(self):
        pos = sincos_pos_embed(3, 5, 32)
        assert interpolate_pos_embed(pos, (3, 5), (3, 5)) is pos

    def test_interpolation_resizes(self):
        pos = sincos_pos_embed(4, 4, 32)
        out = interpolate_pos_embed(pos, (4, 4), (7, 9))
        assert out.shape == (1 + 63, 32)
        assert np.array_equal(out[0], pos[0])  # CLS slot untouched
        # grid corners survive the bilinear map
        src_grid = pos[1:].reshape(4, 4, 32)
        dst_grid = out[1:].reshape(7, 9, 32)
        assert np.allclose(dst_grid[0, 0], src_grid[0, 0], atol=1e-6)
        assert np.allclose(dst_grid[-1, -1], src_grid[-1, -1], atol=1e-6)


class TestPatchify:
    def test_channel_major_order(self):
        # single 2x2 patch; vector must be all R, then all G, then all B
        image = np.zeros((1, 2, 2, 3), np.float32)
        image[0, :, :, 0] = [[1, 2], [3, 4]]
        image[0, :, :, 1] = [[5, 6], [7, 8]]
        image[0, :, :, 2] = [[9, 10], [11, 12]]
        flat = patchify(image, 2)
        assert flat.shape == (1, 1, 12)
        assert flat[0, 0].tolist() == [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12]

    def test_patch_count(self):
        image = np.zeros((2, 8, 12, 3), np.float32)
        assert patchify(image, 4).shape == (2, 6, 48)
