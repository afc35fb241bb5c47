"""Command-line entry point.

Subcommands: ``allocate`` (ATTN + rate -> map JSON), ``encode`` (PPM + ATTN
+ rate -> FRAME), ``decode`` (FRAME -> PPM + report JSON), ``trace`` (model
params -> TRACE), ``run`` (corpus + trace -> CSV/JSONL), ``synth``
(synthetic corpus).

Exit codes: 0 success, 1 data error (a JSON line with the error category is
printed to stderr), 2 usage error.  No subcommand leaves partial output on
failure: files are written to a temporary sibling and renamed on success.
Randomness is controlled by --seed, with the SEMRATE_SEED environment
variable as fallback.
"""

from __future__ import annotations

import json
import math
import os
import sys
import tempfile
from pathlib import Path

import click

from . import channel as channel_mod
from .allocator import DEFAULT_TABLE, RateTable, select_resolutions
from .attn import read_attn_file, write_attn_file
from .channel import generate_trace, read_trace_file, write_trace_file
from .errors import SemrateError
from .pipeline import (
    CorpusItem,
    make_synthetic_corpus,
    read_ppm,
    receive,
    reports_to_csv,
    reports_to_jsonl,
    run_experiment,
    transmit,
    write_ppm,
)


class _DataErrorGroup(click.Group):
    """Maps data errors to exit code 1 with a machine-readable category."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.exceptions.Exit:
            raise
        except click.ClickException:
            raise
        except (SemrateError, OSError) as exc:
            category = getattr(exc, "category", "io")
            click.echo(json.dumps({"error": category, "message": str(exc)}), err=True)
            ctx.exit(1)


@click.group(cls=_DataErrorGroup)
@click.version_option(package_name="semrate")
def main():
    """Attention-guided multi-resolution patch coding toolkit."""


def _parse_table(_ctx, _param, value) -> RateTable:
    if value is None:
        return DEFAULT_TABLE
    try:
        return RateTable(tuple(int(v) for v in value.split(",")))
    except (ValueError, SemrateError) as exc:
        raise click.BadParameter(str(exc))


_table_option = click.option(
    "--table",
    callback=_parse_table,
    default=None,
    help="Comma-separated byte budgets per level (default 0,12,24,48,196).",
)
_seed_option = click.option(
    "--seed",
    type=int,
    default=0,
    show_default=True,
    envvar="SEMRATE_SEED",
    help="PRNG seed (falls back to SEMRATE_SEED).",
)


def _atomic_write(path: str, data: bytes):
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or Path("."), prefix=target.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(output: str, data: bytes):
    if output == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        _atomic_write(output, data)


def _none_if_inf(x):
    if x is not None and not math.isfinite(x):
        return None
    return x


@main.command()
@click.option("--attn", "attn_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--rate", required=True, type=click.IntRange(min=0), help="Byte budget for the block.")
@_table_option
@click.option("-o", "--output", default="-", help="Output path, or - for stdout.")
def allocate(attn_path, rate, table, output):
    """Map an ATTN file and a byte budget to a resolution map (JSON)."""
    grid = read_attn_file(Path(attn_path).read_bytes())
    rmap = select_resolutions(grid, rate, table)
    doc = {
        "rows": rmap.rows,
        "cols": rmap.cols,
        "levels": rmap.levels.tolist(),
        "total_bytes": rmap.total_bytes(table),
        "histogram": rmap.histogram(table),
    }
    _emit(output, (json.dumps(doc) + "\n").encode())


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--attn", "attn_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--rate", required=True, type=click.IntRange(min=0))
@_table_option
@click.option("--deduct-overhead", is_flag=True, help="Subtract header+map+CRC from the budget.")
@click.option("-o", "--output", required=True, help="FRAME output path.")
def encode(image_path, attn_path, rate, table, deduct_overhead, output):
    """Encode a PPM image into one FRAME under a byte budget."""
    image = read_ppm(Path(image_path).read_bytes())
    grid = read_attn_file(Path(attn_path).read_bytes())
    frame = transmit(image, grid, rate, table, deduct_overhead=deduct_overhead)
    _emit(output, frame)


@main.command()
@click.option("--frame", "frame_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--original", "original_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--attn", "attn_path", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, help="Reconstructed PPM path.")
def decode(frame_path, original_path, attn_path, output):
    """Decode a FRAME to a PPM; print a report (JSON) to stdout.

    MSE/PSNR need --original; weighted MSE additionally needs --attn.
    """
    original = read_ppm(Path(original_path).read_bytes()) if original_path else None
    grid = read_attn_file(Path(attn_path).read_bytes()) if attn_path else None
    recon, report = receive(Path(frame_path).read_bytes(), original, grid)
    _emit(output, write_ppm(recon))
    doc = {
        "bytes_used": report.bytes_used,
        "frame_bytes": report.frame_bytes,
        "histogram": list(report.histogram),
        "mse": report.mse,
        "psnr": _none_if_inf(report.psnr),
        "exact": report.exact,
        "wmse": report.wmse,
        "q_bytes": report.q_bytes,
        "q_patches": report.q_patches,
    }
    click.echo(json.dumps(doc))


@main.command()
@click.option(
    "--model",
    required=True,
    type=click.Choice(["constant", "iid_uniform", "gilbert_elliott", "rayleigh_capacity"]),
)
@click.option("--blocks", required=True, type=click.IntRange(min=1))
@click.option("--rate", type=click.IntRange(min=0), help="constant: per-block byte budget.")
@click.option("--lo", type=click.IntRange(min=0), help="iid_uniform: low byte budget (incl).")
@click.option("--hi", type=click.IntRange(min=0), help="iid_uniform: high byte budget (incl).")
@click.option("--p-gb", type=float, help="gilbert_elliott: P(good -> bad).")
@click.option("--p-bg", type=float, help="gilbert_elliott: P(bad -> good).")
@click.option("--r-good", type=click.IntRange(min=0), help="gilbert_elliott: good-state bytes.")
@click.option("--r-bad", type=click.IntRange(min=0), help="gilbert_elliott: bad-state bytes.")
@click.option("--bandwidth", type=click.IntRange(min=1), help="rayleigh_capacity: symbols per block.")
@click.option("--snr", type=float, help="rayleigh_capacity: mean linear SNR.")
@_seed_option
@click.option("-o", "--output", required=True, help="TRACE output path.")
def trace(model, blocks, rate, lo, hi, p_gb, p_bg, r_good, r_bad, bandwidth, snr, seed, output):
    """Generate a rate trace from a channel model."""

    def need(name, value):
        if value is None:
            raise click.UsageError("--model %s requires --%s" % (model, name))
        return value

    if model == "constant":
        m = channel_mod.Constant(need("rate", rate), seed)
    elif model == "iid_uniform":
        m = channel_mod.IidUniform(need("lo", lo), need("hi", hi), seed)
    elif model == "gilbert_elliott":
        m = channel_mod.GilbertElliott(
            need("p-gb", p_gb), need("p-bg", p_bg), need("r-good", r_good), need("r-bad", r_bad), seed
        )
    else:
        m = channel_mod.RayleighCapacity(need("bandwidth", bandwidth), need("snr", snr), seed)
    _emit(output, write_trace_file(generate_trace(m, blocks)))


@main.command()
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--trace", "trace_path", required=True, type=click.Path(exists=True, dir_okay=False))
@_table_option
@click.option("--deduct-overhead", is_flag=True)
@click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default="csv", show_default=True)
@click.option("--recon-dir", type=click.Path(file_okay=False), help="Also write name.ppm reconstructions here.")
@click.option("-o", "--output", required=True, help="Report output path.")
def run(corpus_dir, trace_path, table, deduct_overhead, jobs, fmt, recon_dir, output):
    """Transmit every corpus image over a trace and write the report table.

    The corpus directory holds name.ppm + name.attn pairs; rows are ordered
    by image name.  Per-image failures are reported on stderr and skipped.
    """
    corpus = _load_corpus(Path(corpus_dir))
    rate_trace = read_trace_file(Path(trace_path).read_bytes())
    recon_hook = None
    if recon_dir is not None:
        root = Path(recon_dir)
        root.mkdir(parents=True, exist_ok=True)

        def recon_hook(_index, name, recon):
            _atomic_write(str(root / (name + ".ppm")), write_ppm(recon))

    reports, errors = run_experiment(
        corpus, rate_trace, table, deduct_overhead=deduct_overhead, jobs=jobs,
        recon_hook=recon_hook,
    )
    for index, name, message in errors:
        click.echo(json.dumps({"index": index, "image": name, "error": message}), err=True)
    text = reports_to_csv(reports) if fmt == "csv" else reports_to_jsonl(reports)
    _emit(output, text.encode())


def _load_corpus(root: Path) -> list[CorpusItem]:
    items = []
    for ppm_path in sorted(root.glob("*.ppm")):
        attn_path = ppm_path.with_suffix(".attn")
        if not attn_path.exists():
            raise SemrateError("missing attention file for %s" % ppm_path.name)
        items.append(
            CorpusItem(
                ppm_path.stem,
                read_ppm(ppm_path.read_bytes()),
                read_attn_file(attn_path.read_bytes()),
            )
        )
    if not items:
        raise SemrateError("no .ppm images in %s" % root)
    return items


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--count", type=click.IntRange(min=1), default=32, show_default=True)
@click.option("--rows", type=click.IntRange(min=1), default=16, show_default=True)
@click.option("--cols", type=click.IntRange(min=1), default=16, show_default=True)
@click.option("--patch-size", type=click.IntRange(min=1), default=8, show_default=True)
@_seed_option
def synth(out_dir, count, rows, cols, patch_size, seed):
    """Generate a synthetic corpus: PPM + ATTN pairs and labels.csv."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    items = make_synthetic_corpus(count, rows, cols, patch_size, seed)
    labels = ["name,label"]
    for item in items:
        _atomic_write(str(root / (item.name + ".ppm")), write_ppm(item.image))
        _atomic_write(str(root / (item.name + ".attn")), write_attn_file(item.grid))
        labels.append("%s,%d" % (item.name, item.label))
    _atomic_write(str(root / "labels.csv"), ("\n".join(labels) + "\n").encode())
    click.echo("wrote %d images to %s" % (len(items), root))
