"""Best-effort conversion of pretrained DINO checkpoints to the npz schema.

Requires torch (and optionally transformers) plus downloaded weights, none
of which this toolkit depends on at runtime; import errors surface with an
instructive message.  Expected source layout is the timm/DINO ViT naming
(``blocks.N.attn.qkv.weight`` etc.) as found in torch-hub DINO checkpoints
or ``ViTModel``-style state dicts converted to that naming.
"""

from __future__ import annotations

import numpy as np

from .vit import VitConfig


def convert_state_dict(state: dict, config: VitConfig) -> dict:
    """Map a timm/DINO-style state dict (arrays) onto the npz schema."""
    out = {}

    def take(key):
        if key not in state:
            raise KeyError("checkpoint is missing %r" % key)
        return np.asarray(state[key], dtype=np.float32)

    conv = take("patch_embed.proj.weight")  # (D, 3, p, p)
    out["patch_embed.weight"] = conv.reshape(conv.shape[0], -1)
    out["patch_embed.bias"] = take("patch_embed.proj.bias")
    out["cls_token"] = take("cls_token").reshape(-1)

    pos = take("pos_embed").reshape(-1, config.embed_dim)  # (1+N, D)
    n = pos.shape[0] - 1
    side = int(round(n ** 0.5))
    if side * side != n:
        raise ValueError("cannot infer a square positional grid from %d tokens" % n)
    out["pos_embed"] = pos
    out["pos_rows"] = np.int64(side)
    out["pos_cols"] = np.int64(side)

    for i in range(config.depth):
        src = "blocks.%d." % i
        dst = "block%d." % i
        for a, b in (
            ("norm1.weight", "norm1.weight"),
            ("norm1.bias", "norm1.bias"),
            ("attn.qkv.weight", "qkv.weight"),
            ("attn.qkv.bias", "qkv.bias"),
            ("attn.proj.weight", "proj.weight"),
            ("attn.proj.bias", "proj.bias"),
            ("norm2.weight", "norm2.weight"),
            ("norm2.bias", "norm2.bias"),
            ("mlp.fc1.weight", "fc1.weight"),
            ("mlp.fc1.bias", "fc1.bias"),
            ("mlp.fc2.weight", "fc2.weight"),
            ("mlp.fc2.bias", "fc2.bias"),
        ):
            out[dst + b] = take(src + a)
    return out


def convert_torch_checkpoint(checkpoint_path, config: VitConfig) -> dict:
    try:
        import torch
    except ImportError as exc:
        raise RuntimeError(
            "converting a pretrained checkpoint requires torch; "
            "install it and download the checkpoint first"
        ) from exc
    state = torch.load(checkpoint_path, map_location="cpu", weights_only=True)
    if isinstance(state, dict) and "state_dict" in state:
        state = state["state_dict"]
    arrays = {k: v.numpy() for k, v in state.items() if hasattr(v, "numpy")}
    return convert_state_dict(arrays, config)
