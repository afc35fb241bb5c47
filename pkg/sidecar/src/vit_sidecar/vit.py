"""Minimal vision transformer forward pass in numpy.

Implements exactly what attention extraction needs: patch embedding, CLS
token, positional embeddings, and a stack of pre-norm transformer blocks
(multi-head self-attention + GELU MLP).  The last block only computes the
CLS query's attention row per head, which is the extraction target.

Weights come either from an ``.npz`` checkpoint (see ``save_weights`` for
the schema; ``convert`` can produce one from a pretrained DINO checkpoint)
or from a seeded random initialization.  The seeded model is a stand-in for
environments without pretrained weights: its attention is structurally
valid (softmax rows, correct shapes) but carries no learned semantics.

The default geometry matches the small DINO variant: patch size 8,
embedding width 384, 12 blocks, 6 heads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

LN_EPS = 1e-6


@dataclass(frozen=True)
class VitConfig:
    patch_size: int = 8
    embed_dim: int = 384
    depth: int = 12
    n_heads: int = 6
    mlp_ratio: int = 4

    def __post_init__(self):
        if self.embed_dim % self.n_heads:
            raise ValueError("embed_dim must divide evenly into heads")
        if min(self.patch_size, self.embed_dim, self.depth, self.n_heads) < 1:
            raise ValueError("config values must be positive")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.n_heads


SMALL_VIT_8 = VitConfig()


def init_weights(config: VitConfig, seed: int) -> dict:
    """Deterministic random initialization (normal, std 0.02)."""
    rng = np.random.default_rng(seed)
    d, p = config.embed_dim, config.patch_size
    hidden = config.mlp_ratio * d

    def w(*shape):
        return rng.normal(0.0, 0.02, shape).astype(np.float32)

    weights = {
        "patch_embed.weight": w(d, 3 * p * p),
        "patch_embed.bias": np.zeros(d, np.float32),
        "cls_token": w(d),
    }
    for i in range(config.depth):
        pre = "block%d." % i
        weights[pre + "norm1.weight"] = np.ones(d, np.float32)
        weights[pre + "norm1.bias"] = np.zeros(d, np.float32)
        weights[pre + "qkv.weight"] = w(3 * d, d)
        weights[pre + "qkv.bias"] = np.zeros(3 * d, np.float32)
        weights[pre + "proj.weight"] = w(d, d)
        weights[pre + "proj.bias"] = np.zeros(d, np.float32)
        weights[pre + "norm2.weight"] = np.ones(d, np.float32)
        weights[pre + "norm2.bias"] = np.zeros(d, np.float32)
        weights[pre + "fc1.weight"] = w(hidden, d)
        weights[pre + "fc1.bias"] = np.zeros(hidden, np.float32)
        weights[pre + "fc2.weight"] = w(d, hidden)
        weights[pre + "fc2.bias"] = np.zeros(d, np.float32)
    return weights


def save_weights(path, weights: dict):
    np.savez_compressed(path, **weights)


def load_weights(path) -> dict:
    with np.load(path) as data:
        return {k: data[k] for k in data.files}


def sincos_pos_embed(rows: int, cols: int, dim: int, scale: float = 0.02) -> np.ndarray:
    """Fixed 2-D sine/cosine positional embedding, CLS position zero.

    Used whenever a checkpoint carries no learned positional table; scaled
    down to the weight-init magnitude so position does not swamp content.
    """
    quarter = dim // 4
    omega = 1.0 / (10000.0 ** (np.arange(quarter) / quarter))
    r = np.arange(rows).repeat(cols)[:, None] * omega[None, :]
    c = np.tile(np.arange(cols), rows)[:, None] * omega[None, :]
    out = np.concatenate([np.sin(r), np.cos(r), np.sin(c), np.cos(c)], axis=1)
    if out.shape[1] < dim:
        out = np.pad(out, ((0, 0), (0, dim - out.shape[1])))
    pos = np.vstack([np.zeros(dim), out]).astype(np.float32)
    return pos * scale


def interpolate_pos_embed(pos: np.ndarray, src: tuple[int, int], dst: tuple[int, int]) -> np.ndarray:
    """Bilinear grid resize of a learned (1+N, D) positional table."""
    if src == dst:
        return pos
    cls_pos, grid = pos[:1], pos[1:].reshape(src[0], src[1], -1)
    r = np.linspace(0, src[0] - 1, dst[0])
    c = np.linspace(0, src[1] - 1, dst[1])
    r0 = np.clip(np.floor(r).astype(int), 0, src[0] - 1)
    r1 = np.clip(r0 + 1, 0, src[0] - 1)
    c0 = np.clip(np.floor(c).astype(int), 0, src[1] - 1)
    c1 = np.clip(c0 + 1, 0, src[1] - 1)
    fr = (r - r0)[:, None, None]
    fc = (c - c0)[None, :, None]
    out = (
        grid[r0][:, c0] * (1 - fr) * (1 - fc)
        + grid[r1][:, c0] * fr * (1 - fc)
        + grid[r0][:, c1] * (1 - fr) * fc
        + grid[r1][:, c1] * fr * fc
    )
    return np.vstack([cls_pos, out.reshape(dst[0] * dst[1], -1)]).astype(np.float32)


def _layer_norm(x, weight, bias):
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + LN_EPS) * weight + bias


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0).astype(np.float32)))


def _softmax(x, axis=-1):
    x = x - x.max(axis=axis, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=axis, keepdims=True)


def _split_heads(x, n_heads):
    b, t, d = x.shape
    return x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def patchify(images: np.ndarray, p: int) -> np.ndarray:
    """(B, H, W, 3) float -> (B, P, 3*p*p) with channel-major patch vectors."""
    b, h, w, _ = images.shape
    if h % p or w % p:
        raise ValueError("image dims must be multiples of the patch size")
    rows, cols = h // p, w // p
    x = images.reshape(b, rows, p, cols, p, 3)
    # (B, rows, cols, 3, p, p): channel-major matches conv-style flattening
    x = x.transpose(0, 1, 3, 5, 2, 4)
    return x.reshape(b, rows * cols, 3 * p * p)


def cls_attention_rows(
    images: np.ndarray, weights: dict, config: VitConfig = SMALL_VIT_8
) -> np.ndarray:
    """Per-head CLS attention rows of the last block.

    ``images``: (B, H, W, 3) float32, already normalized.  Returns
    (B, n_heads, 1+P) softmax rows (each sums to 1).
    """
    images = np.ascontiguousarray(images, dtype=np.float32)
    b, h, w, _ = images.shape
    p = config.patch_size
    rows, cols = h // p, w // p

    x = patchify(images, p) @ weights["patch_embed.weight"].T + weights["patch_embed.bias"]
    cls = np.broadcast_to(weights["cls_token"], (b, 1, config.embed_dim))
    x = np.concatenate([cls, x], axis=1)

    if "pos_embed" in weights:
        src = (int(weights["pos_rows"]), int(weights["pos_cols"]))
        pos = interpolate_pos_embed(weights["pos_embed"], src, (rows, cols))
    else:
        pos = sincos_pos_embed(rows, cols, config.embed_dim)
    x = x + pos[None, :, :]

    scale = 1.0 / np.sqrt(np.float32(config.head_dim))
    for i in range(config.depth):
        pre = "block%d." % i
        h_norm = _layer_norm(x, weights[pre + "norm1.weight"], weights[pre + "norm1.bias"])
        qkv = h_norm @ weights[pre + "qkv.weight"].T + weights[pre + "qkv.bias"]
        q, k, v = np.split(qkv, 3, axis=-1)
        q = _split_heads(q, config.n_heads)
        k = _split_heads(k, config.n_heads)

        if i == config.depth - 1:
            # only the CLS query's row is needed from the final block
            logits = np.einsum("bhd,bhtd->bht", q[:, :, 0, :], k) * scale
            return _softmax(logits, axis=-1)

        v = _split_heads(v, config.n_heads)
        attn = _softmax(q @ k.transpose(0, 1, 3, 2) * scale, axis=-1)
        out = (attn @ v).transpose(0, 2, 1, 3).reshape(b, -1, config.embed_dim)
        x = x + out @ weights[pre + "proj.weight"].T + weights[pre + "proj.bias"]

        h_norm = _layer_norm(x, weights[pre + "norm2.weight"], weights[pre + "norm2.bias"])
        hidden = _gelu(h_norm @ weights[pre + "fc1.weight"].T + weights[pre + "fc1.bias"])
        x = x + hidden @ weights[pre + "fc2.weight"].T + weights[pre + "fc2.bias"]

    raise AssertionError("unreachable: depth >= 1 guaranteed by config")
