"""Image -> attention grid extraction.

Runs the transformer forward, averages the last block's per-head CLS
attention rows (dropping the CLS->CLS entry, no renormalization), and
writes the grid in the portable ATTN format.  The per-cell average is
``head0 + fsum(head_h - head0) / H``, the same formula the consuming
toolkit documents, so exported grids match its aggregation bit for bit
after the f32 round trip.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .io_formats import load_image, resize_image, write_attn
from .vit import SMALL_VIT_8, VitConfig, cls_attention_rows, init_weights, load_weights

# ImageNet channel statistics used by the pretrained encoder family.
IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)

# The experimental preset upscales inputs to width 320, height 480.
DEFAULT_TARGET_HW = (480, 320)


@dataclass(frozen=True)
class ExtractorConfig:
    """Extraction settings: model geometry, resize target, weight source."""

    vit: VitConfig = SMALL_VIT_8
    target_hw: tuple[int, int] | None = DEFAULT_TARGET_HW
    weights_path: str | None = None
    seed: int = 0

    def resolve_target(self, h: int, w: int) -> tuple[int, int]:
        if self.target_hw is not None:
            th, tw = self.target_hw
        else:
            # snap to patch multiples, never below one patch
            p = self.vit.patch_size
            th, tw = max(p, round(h / p) * p), max(p, round(w / p) * p)
        p = self.vit.patch_size
        if th % p or tw % p:
            raise ValueError("resize target %dx%d not a multiple of patch %d" % (th, tw, p))
        return th, tw


def get_weights(config: ExtractorConfig) -> dict:
    if config.weights_path is not None:
        return load_weights(config.weights_path)
    return init_weights(config.vit, config.seed)


def normalize(images: np.ndarray) -> np.ndarray:
    return ((images.astype(np.float32) / 255.0) - IMAGENET_MEAN) / IMAGENET_STD


def average_heads(rows_per_head: np.ndarray) -> np.ndarray:
    """(n_heads, 1+P) softmax rows -> length-P patch vector.

    Drops index 0; exact for identical heads, order-independent per cell.
    """
    patch = rows_per_head[:, 1:].astype(np.float64)
    base = patch[0]
    dev = patch - base
    n_heads = patch.shape[0]
    return base + np.array(
        [math.fsum(dev[:, j].tolist()) for j in range(patch.shape[1])]
    ) / n_heads


def attention_grid(images: np.ndarray, weights: dict, vit: VitConfig) -> np.ndarray:
    """(B, H, W, 3) uint8 -> (B, H/p, W/p) aggregated attention grids."""
    rows = images.shape[1] // vit.patch_size
    cols = images.shape[2] // vit.patch_size
    head_rows = cls_attention_rows(normalize(images), weights, vit)
    out = np.empty((images.shape[0], rows, cols))
    for b in range(images.shape[0]):
        out[b] = average_heads(head_rows[b]).reshape(rows, cols)
    return out


def extract_attention(image_path, out_path, config: ExtractorConfig = ExtractorConfig()):
    """Extract one image's attention grid and write it as an ATTN file.

    Returns the (rows, cols) grid shape.
    """
    image = load_image(image_path)
    th, tw = config.resolve_target(*image.shape[:2])
    if (th, tw) != image.shape[:2]:
        image = resize_image(image, (th, tw))
    grid = attention_grid(image[None], get_weights(config), config.vit)[0]
    write_attn(out_path, grid)
    return grid.shape


def extract_attention_batch(
    image_paths, out_paths, config: ExtractorConfig = ExtractorConfig()
):
    """Batched extraction for same-size images; one forward pass per chunk."""
    if len(image_paths) != len(out_paths):
        raise ValueError("need one output path per image")
    weights = get_weights(config)
    images = []
    for path in image_paths:
        image = load_image(path)
        th, tw = config.resolve_target(*image.shape[:2])
        if (th, tw) != image.shape[:2]:
            image = resize_image(image, (th, tw))
        images.append(image)
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise ValueError("batched extraction needs same-size images, got %r" % shapes)
    grids = attention_grid(np.stack(images), weights, config.vit)
    for grid, out_path in zip(grids, out_paths):
        write_attn(out_path, grid)
    return grids.shape[1:]
