"""Sidecar command line: extract attention grids, score reconstructions.

Mirrors the main toolkit's flag style: 0 on success, 1 on data errors
(JSON category line on stderr), 2 on usage errors; --seed falls back to
the SIDECAR_SEED environment variable.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .classify import accuracy_csv, eval_accuracy
from .extract import DEFAULT_TARGET_HW, ExtractorConfig, extract_attention, extract_attention_batch
from .vit import VitConfig, init_weights, save_weights


class _DataErrorGroup(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.exceptions.Exit:
            raise
        except click.ClickException:
            raise
        except (ValueError, KeyError, OSError, RuntimeError) as exc:
            click.echo(
                json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True
            )
            ctx.exit(1)


@click.group(cls=_DataErrorGroup)
def main():
    """Vision-transformer attention sidecar."""


def _parse_target(_ctx, _param, value):
    if value is None:
        return DEFAULT_TARGET_HW
    if value == "none":
        return None
    try:
        h, w = (int(v) for v in value.split("x"))
        return (h, w)
    except ValueError:
        raise click.BadParameter("expected HxW, e.g. 480x320, or 'none'")


_seed_option = click.option(
    "--seed", type=int, default=0, show_default=True, envvar="SIDECAR_SEED",
    help="Seed for the fallback random weights (SIDECAR_SEED env fallback).",
)
_weights_option = click.option(
    "--weights", type=click.Path(exists=True, dir_okay=False),
    help="npz checkpoint; omitted -> seeded random weights.",
)
_target_option = click.option(
    "--target", callback=_parse_target, default=None,
    help="Resize target HxW (default 480x320) or 'none' to snap dims to patch multiples.",
)


def _config(weights, seed, target, patch_size, depth, heads, dim) -> ExtractorConfig:
    vit = VitConfig(patch_size=patch_size, embed_dim=dim, depth=depth, n_heads=heads)
    return ExtractorConfig(vit=vit, target_hw=target, weights_path=weights, seed=seed)


_vit_options = [
    click.option("--patch-size", type=click.IntRange(min=1), default=8, show_default=True),
    click.option("--depth", type=click.IntRange(min=1), default=12, show_default=True),
    click.option("--heads", type=click.IntRange(min=1), default=6, show_default=True),
    click.option("--dim", type=click.IntRange(min=4), default=384, show_default=True),
]


def _with_vit_options(cmd):
    for opt in reversed(_vit_options):
        cmd = opt(cmd)
    return cmd


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, dir_okay=False))
@_weights_option
@_target_option
@_seed_option
@_with_vit_options
@click.option("-o", "--output", required=True, help="ATTN output path.")
def extract(image_path, weights, target, seed, patch_size, depth, heads, dim, output):
    """Extract one image's averaged CLS attention grid to an ATTN file."""
    config = _config(weights, seed, target, patch_size, depth, heads, dim)
    shape = extract_attention(image_path, output, config)
    click.echo(json.dumps({"rows": shape[0], "cols": shape[1], "out": output}))


@main.command(name="extract-dir")
@click.option("--images", "images_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@_weights_option
@_target_option
@_seed_option
@_with_vit_options
@click.option("--batch", type=click.IntRange(min=1), default=32, show_default=True)
def extract_dir(images_dir, out_dir, weights, target, seed, patch_size, depth, heads, dim, batch):
    """Extract attention for every .ppm in a directory (same-size images)."""
    config = _config(weights, seed, target, patch_size, depth, heads, dim)
    images = sorted(Path(images_dir).glob("*.ppm"))
    if not images:
        raise ValueError("no .ppm images in %s" % images_dir)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    outs = [Path(out_dir) / (p.stem + ".attn") for p in images]
    for i in range(0, len(images), batch):
        extract_attention_batch(images[i: i + batch], outs[i: i + batch], config)
    click.echo(json.dumps({"count": len(images), "out": str(out_dir)}))


@main.command(name="eval")
@click.option("--originals", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--recons", required=True, type=click.Path(exists=True, file_okay=False),
              help="Root with one subdirectory per rate bucket (named by byte budget).")
@click.option("--labels", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", default="-", help="Accuracy CSV path, or - for stdout.")
def eval_cmd(originals, recons, labels, output):
    """Top-1 accuracy of reconstructions per rate bucket (CSV: r,accuracy,n)."""
    rows = eval_accuracy(originals, recons, labels)
    text = accuracy_csv(rows)
    if output == "-":
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


@main.command(name="init-weights")
@_seed_option
@_with_vit_options
@click.option("-o", "--output", required=True, help="npz output path.")
def init_weights_cmd(seed, patch_size, depth, heads, dim, output):
    """Write a seeded random checkpoint (for reproducible offline runs)."""
    vit = VitConfig(patch_size=patch_size, embed_dim=dim, depth=depth, n_heads=heads)
    save_weights(output, init_weights(vit, seed))
    click.echo(json.dumps({"out": output}))


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False),
              help="torch checkpoint with timm/DINO naming.")
@_with_vit_options
@click.option("-o", "--output", required=True, help="npz output path.")
def convert(checkpoint, patch_size, depth, heads, dim, output):
    """Convert a pretrained torch checkpoint to the sidecar npz schema."""
    from .convert import convert_torch_checkpoint

    vit = VitConfig(patch_size=patch_size, embed_dim=dim, depth=depth, n_heads=heads)
    save_weights(output, convert_torch_checkpoint(checkpoint, vit))
    click.echo(json.dumps({"out": output}))


if __name__ == "__main__":
    main()
