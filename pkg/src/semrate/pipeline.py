"""End-to-end transmit/receive over rate traces, metrics, and experiments.

An image is split into p x p patches; the allocator maps its attention grid
and the block's byte budget onto per-patch levels; patches are encoded and
framed; the receiver reconstructs (level-0 patches become mid-gray 128,
which minimizes worst-case squared error for u8 pixels) and scores the
result against the original when it is available as side information.

Images are (H, W, 3) uint8 arrays; the attention grid has H/p rows and
W/p columns.  The corpus format on disk is binary PPM (P6, maxval 255)
plus an ATTN file per image, paired by stem.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .allocator import (
    DEFAULT_TABLE,
    RateTable,
    ResolutionMap,
    check_budget,
    select_resolutions,
    select_single_level,
)
from .attn import AttentionGrid
from .channel import RateTrace
from .codec import decode_patch, encode_patch
from .errors import (
    BadMagicError,
    FieldValueError,
    SemrateError,
    TrailingDataError,
    TruncatedError,
    ValidationError,
)
from .frame import build_frame, frame_overhead, parse_frame

BLANK_PIXEL = 128
SWEEP_FRACTIONS = (0.05, 0.1, 0.25, 0.5, 0.75, 1.0)
SINGLE_BASELINE_LEVELS = (1, 2, 3)

CSV_HEADER = "index,r,bytes_used,level0,level1,level2,level3,level4,mse,psnr,wmse,q_bytes"
_CSV_LEVELS = 5


# ---------------------------------------------------------------------------
# PPM (P6) reading and writing


def write_ppm(image: np.ndarray) -> bytes:
    image = _check_image(image)
    h, w = image.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + image.tobytes()


def read_ppm(data: bytes) -> np.ndarray:
    """Parse a binary PPM (P6, maxval 255), honoring comments and whitespace."""
    if len(data) < 2:
        raise TruncatedError("shorter than the magic")
    if data[:2] != b"P6":
        raise BadMagicError("not a P6 PPM")
    pos = 2
    fields = []
    while len(fields) < 3:
        # skip whitespace and comments
        while pos < len(data) and data[pos: pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos] == ord("#"):
            while pos < len(data) and data[pos] != ord("\n"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos: pos + 1].isdigit():
            pos += 1
        if pos == start:
            raise TruncatedError("PPM header incomplete")
        fields.append(int(data[start:pos]))
    if pos >= len(data) or not data[pos: pos + 1].isspace():
        raise TruncatedError("PPM header missing raster separator")
    pos += 1
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FieldValueError("PPM dims must be positive")
    if maxval != 255:
        raise FieldValueError("only maxval 255 is supported, got %d" % maxval)
    need = width * height * 3
    raster = data[pos:]
    if len(raster) < need:
        raise TruncatedError("raster needs %d bytes, have %d" % (need, len(raster)))
    if len(raster) > need:
        raise TrailingDataError("%d trailing bytes after raster" % (len(raster) - need))
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()


def _check_image(image: np.ndarray) -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError("image must have shape (H, W, 3), got %r" % (arr.shape,))
    if arr.dtype != np.uint8:
        raise ValidationError("image pixels must be uint8")
    return np.ascontiguousarray(arr)


def _patch_geometry(image: np.ndarray, grid: AttentionGrid) -> int:
    h, w = image.shape[:2]
    if h % grid.rows or w % grid.cols:
        raise ValidationError(
            "image %dx%d not divisible by grid %dx%d" % (h, w, grid.rows, grid.cols)
        )
    p_r, p_c = h // grid.rows, w // grid.cols
    if p_r != p_c:
        raise ValidationError("patches must be square; got %dx%d" % (p_r, p_c))
    return p_r


def get_patch(image: np.ndarray, row: int, col: int, p: int) -> np.ndarray:
    """Extract patch (row, col) as a (3, p, p) uint8 array."""
    tile = image[row * p: (row + 1) * p, col * p: (col + 1) * p]
    return np.ascontiguousarray(tile.transpose(2, 0, 1))


# ---------------------------------------------------------------------------
# Transmit / receive


@dataclass(frozen=True)
class TransmissionReport:
    """Per-block accounting and (when side information is given) quality."""

    index: int | None
    r: int | None
    bytes_used: int
    frame_bytes: int
    histogram: tuple[int, ...]
    mse: float | None
    psnr: float | None
    wmse: float | None
    exact: bool | None
    q_bytes: float
    q_patches: float

    @property
    def n_patches(self) -> int:
        return sum(self.histogram)

    def mean_level(self) -> float:
        return sum(l * c for l, c in enumerate(self.histogram)) / self.n_patches


def transmit(
    image: np.ndarray,
    grid: AttentionGrid,
    budget,
    table: RateTable = DEFAULT_TABLE,
    *,
    deduct_overhead: bool = False,
) -> bytes:
    """Allocate, encode, and frame one image under ``budget`` bytes.

    By default the budget bounds the patch payload bytes only, matching the
    source-rate accounting of the allocator; with ``deduct_overhead`` the
    header, packed map, and CRC are subtracted from the budget before
    allocation so the whole frame fits it (infeasible when the budget is
    smaller than the fixed overhead, in which case an all-zero map is sent).
    """
    image = _check_image(image)
    budget = check_budget(budget)
    p = _patch_geometry(image, grid)
    alloc_budget = budget
    if deduct_overhead:
        alloc_budget = max(0, budget - frame_overhead(grid.rows, grid.cols, table))
    rmap = select_resolutions(grid, alloc_budget, table)
    encoded = []
    for row in range(grid.rows):
        for col in range(grid.cols):
            level = int(rmap.levels[row, col])
            if level:
                encoded.append(encode_patch(get_patch(image, row, col, p), level, table))
    return build_frame(rmap, encoded, table, p)


def receive(
    frame_bytes: bytes,
    original: np.ndarray | None = None,
    grid: AttentionGrid | None = None,
) -> tuple[np.ndarray, TransmissionReport]:
    """Parse and reconstruct one frame; score it when the original is given.

    Level-0 patches are filled with mid-gray.  ``mse``/``psnr``/``exact``
    need ``original``; ``wmse`` additionally needs ``grid``.
    """
    rmap, encoded, table, p = parse_frame(frame_bytes)
    recon = np.full((rmap.rows * p, rmap.cols * p, 3), BLANK_PIXEL, dtype=np.uint8)
    it = iter(encoded)
    for row in range(rmap.rows):
        for col in range(rmap.cols):
            if rmap.levels[row, col]:
                patch = decode_patch(next(it), table, p)
                recon[row * p: (row + 1) * p, col * p: (col + 1) * p] = patch.transpose(1, 2, 0)

    histogram = tuple(rmap.histogram(table))
    payload_bytes = rmap.total_bytes(table)
    mse = psnr = wmse = exact = None
    if original is not None:
        original = _check_image(original)
        if original.shape != recon.shape:
            raise ValidationError(
                "original %r does not match reconstruction %r" % (original.shape, recon.shape)
            )
        mse = image_mse(original, recon)
        psnr = mse_to_psnr(mse)
        exact = mse == 0.0
        if grid is not None:
            wmse = weighted_mse(original, recon, grid)
    h, w = recon.shape[:2]
    report = TransmissionReport(
        index=None,
        r=None,
        bytes_used=payload_bytes,
        frame_bytes=len(frame_bytes),
        histogram=histogram,
        mse=mse,
        psnr=psnr,
        wmse=wmse,
        exact=exact,
        q_bytes=payload_bytes / (3 * w * h),
        q_patches=1.0 - histogram[0] / rmap.levels.size,
    )
    return recon, report


def image_mse(a: np.ndarray, b: np.ndarray) -> float:
    d = a.astype(np.float64) - b.astype(np.float64)
    return float(np.mean(d * d))


def mse_to_psnr(mse: float) -> float:
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 * 255.0 / mse)


def per_patch_mse(original: np.ndarray, recon: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Per-patch MSE on a rows x cols grid (mean over 3*p*p values each)."""
    h, w = original.shape[:2]
    p_r, p_c = h // rows, w // cols
    d = original.astype(np.float64) - recon.astype(np.float64)
    d = (d * d).reshape(rows, p_r, cols, p_c, 3)
    return d.mean(axis=(1, 3, 4))


def weighted_mse(original: np.ndarray, recon: np.ndarray, grid: AttentionGrid) -> float:
    """Attention-weighted reconstruction error: sum(a_i * mse_i) / sum(a_i).

    Equals the plain mean of per-patch MSEs for uniform grids; a zero-sum
    grid falls back to the plain mean.
    """
    original = _check_image(original)
    recon = _check_image(recon)
    if original.shape != recon.shape:
        raise ValidationError("image shapes differ: %r vs %r" % (original.shape, recon.shape))
    _patch_geometry(original, grid)
    mses = per_patch_mse(original, recon, grid.rows, grid.cols)
    weights = grid.values
    total = float(weights.sum())
    if total == 0.0:
        return float(mses.mean())
    return float((weights * mses).sum() / total)


# ---------------------------------------------------------------------------
# Experiment runner


@dataclass(frozen=True)
class CorpusItem:
    name: str
    image: np.ndarray
    grid: AttentionGrid
    label: int | None = None


def send_and_receive(
    item: CorpusItem,
    budget: int,
    table: RateTable = DEFAULT_TABLE,
    *,
    deduct_overhead: bool = False,
) -> tuple[np.ndarray, TransmissionReport]:
    """One full transmit/receive round for one image at one budget."""
    frame = transmit(item.image, item.grid, budget, table, deduct_overhead=deduct_overhead)
    recon, report = receive(frame, item.image, item.grid)
    if deduct_overhead:
        h, w = item.image.shape[:2]
        report = replace(
            report, bytes_used=report.frame_bytes, q_bytes=report.frame_bytes / (3 * w * h)
        )
    return recon, replace(report, r=budget)


def send_and_score(
    item: CorpusItem,
    budget: int,
    table: RateTable = DEFAULT_TABLE,
    *,
    deduct_overhead: bool = False,
) -> TransmissionReport:
    return send_and_receive(item, budget, table, deduct_overhead=deduct_overhead)[1]


def run_experiment(
    corpus: list[CorpusItem],
    trace: RateTrace,
    table: RateTable = DEFAULT_TABLE,
    *,
    deduct_overhead: bool = False,
    jobs: int = 1,
    recon_hook=None,
) -> tuple[list[TransmissionReport], list[tuple[int, str, str]]]:
    """Transmit each corpus image over one trace block and score it.

    The trace is cycled when shorter than the corpus.  Per-image failures
    are recorded as (index, name, message) instead of aborting the run.
    Report rows are ordered by input index regardless of completion order.
    ``recon_hook(index, name, reconstruction)`` is called per successful
    image (from worker threads when jobs > 1).
    """
    if not corpus:
        raise ValidationError("corpus must be non-empty")
    budgets = trace.cycled(len(corpus))

    def one(i: int):
        try:
            recon, rep = send_and_receive(
                corpus[i], budgets[i], table, deduct_overhead=deduct_overhead
            )
            if recon_hook is not None:
                recon_hook(i, corpus[i].name, recon)
            return replace(rep, index=i), None
        except SemrateError as exc:
            return None, (i, corpus[i].name, str(exc))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(one, range(len(corpus))))
    else:
        outcomes = [one(i) for i in range(len(corpus))]

    reports = [rep for rep, _ in outcomes if rep is not None]
    errors = [err for _, err in outcomes if err is not None]
    return reports, errors


def sweep_budgets(n_patches: int, table: RateTable, fractions=SWEEP_FRACTIONS) -> list[int]:
    """Byte budgets at the given fractions of the all-top-level cost."""
    return [int(round(f * table.top_bytes * n_patches)) for f in fractions]


def rate_sweep(
    item: CorpusItem, table: RateTable = DEFAULT_TABLE, fractions=SWEEP_FRACTIONS
) -> list[TransmissionReport]:
    """Transmit one image across a budget sweep (multi-resolution mode)."""
    budgets = sweep_budgets(item.grid.n_patches, table, fractions)
    return [send_and_score(item, b, table) for b in budgets]


def single_level_wmse(
    item: CorpusItem, budget: int, level: int, table: RateTable = DEFAULT_TABLE
) -> float:
    """Attention-weighted MSE of the single-fixed-resolution baseline.

    The top ``budget // bytes(level)`` patches by attention are sent at one
    level, the rest are dropped.
    """
    rmap = select_single_level(item.grid, budget, table, level)
    p = _patch_geometry(item.image, item.grid)
    encoded = []
    for row in range(rmap.rows):
        for col in range(rmap.cols):
            if rmap.levels[row, col]:
                encoded.append(encode_patch(get_patch(item.image, row, col, p), level, table))
    frame = build_frame(rmap, encoded, table, p)
    _, report = receive(frame, item.image, item.grid)
    return report.wmse


def multi_vs_single(
    item: CorpusItem,
    budget: int,
    table: RateTable = DEFAULT_TABLE,
    baseline_levels=SINGLE_BASELINE_LEVELS,
) -> tuple[float, dict[int, float]]:
    """Multi-resolution weighted MSE vs each single-resolution baseline."""
    multi = send_and_score(item, budget, table).wmse
    singles = {lvl: single_level_wmse(item, budget, lvl, table) for lvl in baseline_levels}
    return multi, singles


# ---------------------------------------------------------------------------
# Report serialization


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def reports_to_csv(reports: list[TransmissionReport]) -> str:
    """Fixed-schema CSV; histogram columns cover exactly 5 levels."""
    lines = [CSV_HEADER]
    for rep in reports:
        hist = _csv_histogram(rep.histogram)
        lines.append(
            ",".join(
                [
                    _fmt(rep.index),
                    _fmt(rep.r),
                    _fmt(rep.bytes_used),
                    *[str(c) for c in hist],
                    _fmt(rep.mse),
                    _fmt(rep.psnr),
                    _fmt(rep.wmse),
                    _fmt(rep.q_bytes),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def reports_to_jsonl(reports: list[TransmissionReport]) -> str:
    """JSON-lines twin of the CSV schema; non-finite PSNR becomes null."""
    import json

    lines = []
    for rep in reports:
        hist = _csv_histogram(rep.histogram)
        row = {
            "index": rep.index,
            "r": rep.r,
            "bytes_used": rep.bytes_used,
            **{"level%d" % i: hist[i] for i in range(_CSV_LEVELS)},
            "mse": rep.mse,
            "psnr": None if rep.psnr is not None and not math.isfinite(rep.psnr) else rep.psnr,
            "wmse": rep.wmse,
            "q_bytes": rep.q_bytes,
        }
        lines.append(json.dumps(row))
    return "\n".join(lines) + "\n"


def _csv_histogram(histogram: tuple[int, ...]) -> tuple[int, ...]:
    if len(histogram) > _CSV_LEVELS:
        raise ValidationError(
            "report CSV covers %d levels; table has %d" % (_CSV_LEVELS, len(histogram))
        )
    return histogram + (0,) * (_CSV_LEVELS - len(histogram))


# ---------------------------------------------------------------------------
# Synthetic corpus


def make_synthetic_corpus(
    count: int,
    rows: int = 16,
    cols: int = 16,
    patch_size: int = 8,
    seed: int = 0,
    n_classes: int = 8,
) -> list[CorpusItem]:
    """Seeded corpus of textured-object images with matching attention blobs.

    Each image is a smooth background with one high-detail elliptical object
    whose texture and palette depend on the class label; the attention grid
    is an unnormalized Gaussian centered on the object.  Deterministic given
    (count, dims, seed).
    """
    if count < 1:
        raise ValidationError("corpus count must be >= 1")
    items = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        label = i % n_classes
        image, center_cell, radius_cells = _synth_image(
            rng, rows, cols, patch_size, label, n_classes
        )
        sigma = max(1.5, 0.8 * radius_cells)
        r = np.arange(rows, dtype=np.float64)[:, None]
        c = np.arange(cols, dtype=np.float64)[None, :]
        d2 = (r - center_cell[0]) ** 2 + (c - center_cell[1]) ** 2
        grid = AttentionGrid(rows, cols, np.exp(-d2 / (2.0 * sigma * sigma)))
        items.append(CorpusItem("img%04d" % i, image, grid, label))
    return items


def _synth_image(rng, rows, cols, p, label, n_classes):
    h, w = rows * p, cols * p
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    # smooth background: two low-frequency cosines with random orientation
    bg = np.full((h, w, 3), 110.0)
    for _ in range(2):
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(0.5, 1.5) / max(h, w)
        phase = rng.uniform(0, 2 * np.pi)
        wave = 25.0 * np.cos(2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
        bg += wave[:, :, None] * rng.uniform(0.4, 1.0, size=3)
    bg += rng.normal(0, 2.0, (h, w, 3))

    # textured elliptical object with a class-specific palette and stripes
    palette = _class_palette(n_classes)
    color = palette[label]
    cy = rng.uniform(0.3 * h, 0.7 * h)
    cx = rng.uniform(0.3 * w, 0.7 * w)
    ry = rng.uniform(0.14 * h, 0.28 * h)
    rx = rng.uniform(0.14 * w, 0.28 * w)
    mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0

    pitch = 3 + (label % 4) * 2
    angle = (label * np.pi / n_classes) + rng.uniform(-0.2, 0.2)
    stripes = np.sign(np.sin(2 * np.pi * (np.cos(angle) * xx + np.sin(angle) * yy) / pitch))
    texture = 55.0 * stripes + rng.normal(0, 6.0, (h, w))

    obj = color[None, None, :] + texture[:, :, None] * np.array([1.0, 0.8, 0.6])
    image = np.where(mask[:, :, None], obj, bg)
    image = np.clip(np.round(image), 0, 255).astype(np.uint8)

    center_cell = (cy / p, cx / p)
    radius_cells = max(ry, rx) / p
    return image, center_cell, radius_cells


def _class_palette(n_classes):
    hues = np.linspace(0.0, 1.0, n_classes, endpoint=False)
    palette = []
    for hue in hues:
        angle = 2 * np.pi * hue
        rgb = 128 + 90 * np.array(
            [np.cos(angle), np.cos(angle - 2 * np.pi / 3), np.cos(angle + 2 * np.pi / 3)]
        )
        palette.append(rgb)
    return np.array(palette)
