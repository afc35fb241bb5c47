"""Attention-guided per-patch rate allocation.

Maps an attention grid and an instantaneous byte budget onto per-patch
resolution levels drawn from a rate table.  The selector is greedy: patch
scores are normalized to the budget, floored onto the table's byte values,
and then repeatedly upgraded, smallest upgrade gap first, while the total
stays within budget.

Two regimes exist.  When the budget cannot cover every patch at the lowest
nonzero level, only the top ``budget // min_bytes`` patches by attention are
sent at level 1 (low-rate branch).  Otherwise every patch gets at least
level 1 and the upgrade loop fills the remaining budget (high-rate branch).

The procedure is deterministic.  Ties are broken explicitly:

* upgrade candidates: smaller gap first, then higher original attention,
  then lower flat index;
* low-rate selection: higher attention first, then lower flat index;
* overshoot repair: lower attention first, then higher flat index.

``brute_force_reference`` re-implements the same procedure with plain lists
and full re-sorting per iteration; it must agree with the optimized path
exactly and serves as the equivalence oracle in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from numbers import Integral

import numpy as np
from numba import njit

from .attn import AttentionGrid
from .errors import ValidationError

# Score nudge applied after an upgrade; byte levels are at least 1 apart in
# any valid table and 12 apart in the default, so the exact value only has
# to sit in (0, smallest level spacing).
EPS = 1e-3

DEFAULT_LEVELS = (0, 12, 24, 48, 196)

# Enumeration bound for the reference implementation.
BRUTE_FORCE_MAX_PATCHES = 12


@dataclass(frozen=True)
class RateTable:
    """Ordered mapping from resolution level index to bytes per patch.

    Level 0 always costs 0 bytes (patch dropped); byte budgets are strictly
    increasing with level index.
    """

    bytes_per_level: tuple[int, ...] = DEFAULT_LEVELS

    def __post_init__(self):
        levels = tuple(int(b) for b in self.bytes_per_level)
        if len(levels) < 2:
            raise ValidationError("rate table needs at least 2 levels")
        if levels[0] != 0:
            raise ValidationError("level 0 must cost 0 bytes")
        for lo, hi in zip(levels, levels[1:]):
            if hi <= lo:
                raise ValidationError(
                    "byte budgets must be strictly increasing: %r" % (levels,)
                )
        object.__setattr__(self, "bytes_per_level", levels)

    @property
    def n_levels(self) -> int:
        return len(self.bytes_per_level)

    @property
    def top_bytes(self) -> int:
        return self.bytes_per_level[-1]

    @property
    def min_nonzero_bytes(self) -> int:
        return self.bytes_per_level[1]

    def __getitem__(self, level: int) -> int:
        return self.bytes_per_level[level]

    def __len__(self) -> int:
        return len(self.bytes_per_level)


DEFAULT_TABLE = RateTable()


@dataclass(frozen=True)
class ResolutionMap:
    """Per-patch level assignment, row-major, values indexing a RateTable."""

    rows: int
    cols: int
    levels: np.ndarray = field(compare=False)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.levels, dtype=np.uint8)
        if self.rows < 1 or self.cols < 1:
            raise ValidationError("resolution map dims must be positive")
        if arr.shape != (self.rows, self.cols):
            raise ValidationError(
                "level array shape %r does not match %dx%d"
                % (arr.shape, self.rows, self.cols)
            )
        arr.setflags(write=False)
        object.__setattr__(self, "levels", arr)

    def __eq__(self, other):
        return (
            isinstance(other, ResolutionMap)
            and self.rows == other.rows
            and self.cols == other.cols
            and np.array_equal(self.levels, other.levels)
        )

    def total_bytes(self, table: RateTable) -> int:
        """Sum of per-patch byte budgets under ``table``."""
        self.validate_against(table)
        q = np.asarray(table.bytes_per_level, dtype=np.int64)
        return int(q[self.levels].sum())

    def histogram(self, table: RateTable) -> list[int]:
        """Patch count per level, length ``table.n_levels``."""
        self.validate_against(table)
        counts = np.bincount(self.levels.ravel(), minlength=table.n_levels)
        return [int(c) for c in counts]

    def validate_against(self, table: RateTable):
        if int(self.levels.max()) >= table.n_levels:
            raise ValidationError("map level exceeds table size")


def lq(x: float, table: RateTable = DEFAULT_TABLE) -> int:
    """Floor quantization: the largest table byte value that is <= x.

    Saturates at the top byte value for x at or above it.
    """
    x = _check_score(x)
    out = 0
    for q in table.bytes_per_level:
        if q <= x:
            out = q
        else:
            break
    return out


def uq(x: float, table: RateTable = DEFAULT_TABLE) -> int:
    """Strict ceiling quantization: the smallest table byte value > x.

    Saturates at the top byte value when no larger value exists.
    """
    x = _check_score(x)
    for q in table.bytes_per_level:
        if q > x:
            return q
    return table.top_bytes


def _check_score(x) -> float:
    x = float(x)
    if math.isnan(x) or x < 0:
        raise ValidationError("quantizer input must be >= 0, got %r" % x)
    return x


def check_budget(budget) -> int:
    if not isinstance(budget, Integral):
        raise ValidationError("budget must be an integer byte count")
    budget = int(budget)
    if budget < 0:
        raise ValidationError("budget must be >= 0, got %d" % budget)
    return budget


def _normalized_scores(grid: AttentionGrid, budget: int):
    """Working scores a_i * budget / sum(a), plus the tie-break key.

    An all-zero grid is replaced by uniform attention, the unique
    scale-invariant completion.  The total is a correctly-rounded float sum
    (math.fsum) so that independent re-implementations of this step agree
    bit for bit.
    """
    flat = grid.values.reshape(-1).astype(np.float64)
    if not flat.any():
        flat = np.ones_like(flat)
    scale = budget / math.fsum(flat.tolist())
    return flat * scale, flat


def select_resolutions(
    grid: AttentionGrid, budget, table: RateTable = DEFAULT_TABLE
) -> ResolutionMap:
    """Assign a resolution level to every patch within ``budget`` bytes.

    The output always satisfies ``total_bytes <= budget``; in the high-rate
    regime (budget > level-1 cost for all patches) every patch is assigned
    at least level 1.
    """
    budget = check_budget(budget)
    q = np.asarray(table.bytes_per_level, dtype=np.int64)
    p_total = grid.rows * grid.cols
    s, tie_key = _normalized_scores(grid, budget)

    if budget <= int(q[1]) * p_total:
        levels = _low_rate_levels(tie_key, budget, int(q[1]), p_total)
        return ResolutionMap(grid.rows, grid.cols, levels.reshape(grid.rows, grid.cols))

    if budget >= int(q[-1]) * p_total:
        # Saturation: the upgrade loop would promote every patch to the top
        # level anyway since no step can exceed the budget.
        levels = np.full(p_total, len(q) - 1, dtype=np.uint8)
        return ResolutionMap(grid.rows, grid.cols, levels.reshape(grid.rows, grid.cols))

    # Floor onto the byte values, then raise dropped patches to level 1.
    bytes_ = q[np.searchsorted(q, s, side="right") - 1]
    bytes_[bytes_ == 0] = q[1]
    total = int(bytes_.sum())

    if total > budget:
        repair_order = np.lexsort((-np.arange(p_total), tie_key))
        total = int(_repair(bytes_, repair_order, q, budget, total))

    _upgrade_loop(bytes_, s, tie_key, q, budget, total)

    levels = np.searchsorted(q, bytes_).astype(np.uint8)
    return ResolutionMap(grid.rows, grid.cols, levels.reshape(grid.rows, grid.cols))


def _low_rate_levels(tie_key, budget, min_bytes, p_total):
    # Top budget//min_bytes patches by attention at level 1, rest dropped.
    order = np.argsort(-tie_key, kind="stable")
    levels = np.zeros(p_total, dtype=np.uint8)
    levels[order[: budget // min_bytes]] = 1
    return levels


@njit(cache=True)
def _repair(bytes_, order, q, budget, total):
    """Downgrade overshooting patches until the total fits the budget.

    Walks patches by ascending attention (ties: higher flat index first) and
    steps each one down a level at a time, never below level 1.  Terminates
    because the all-level-1 total is below the budget in the high-rate branch.
    """
    min_bytes = q[1]
    for k in range(order.shape[0]):
        i = order[k]
        while bytes_[i] > min_bytes and total > budget:
            j = 0
            while q[j] != bytes_[i]:
                j += 1
            total -= q[j] - q[j - 1]
            bytes_[i] = q[j - 1]
        if total <= budget:
            break
    return total


@njit(cache=True)
def _upgrade_loop(bytes_, s, tie_key, q, budget, total):
    """Greedy budget-feasible upgrades, smallest gap to upper quantization first.

    A patch's upgrade target is the strict ceiling of its working score
    (saturating at the top byte value).  For a patch previously raised from
    level 0 the first "upgrade" is a zero-cost re-score to level 1 + EPS,
    mirroring the published data flow; real byte deltas follow.  After an
    upgrade the working score becomes new_bytes + EPS and the patch freezes
    once it reaches the top level.  The budget headroom only shrinks, so a
    patch whose target is infeasible once can be dropped permanently.
    """
    n = bytes_.shape[0]
    n_levels = q.shape[0]
    top = q[n_levels - 1]
    dead = np.zeros(n, dtype=np.bool_)
    while True:
        best = -1
        best_gap = np.inf
        best_key = -np.inf
        best_target = 0
        for i in range(n):
            if dead[i] or bytes_[i] == top:
                continue
            target = top
            for j in range(n_levels):
                if q[j] > s[i]:
                    target = q[j]
                    break
            if total + (target - bytes_[i]) > budget:
                dead[i] = True
                continue
            gap = target - s[i]
            if gap < best_gap or (gap == best_gap and tie_key[i] > best_key):
                best = i
                best_gap = gap
                best_key = tie_key[i]
                best_target = target
        if best < 0:
            return total
        total += best_target - bytes_[best]
        bytes_[best] = best_target
        s[best] = best_target + EPS


def select_single_level(
    grid: AttentionGrid, budget, table: RateTable, level: int
) -> ResolutionMap:
    """Single-resolution baseline: top-q patches by attention at one level.

    ``q = budget // bytes(level)`` patches are selected (capped at P); the
    rest are dropped.  Ties follow the low-rate branch ordering.
    """
    budget = check_budget(budget)
    if not 1 <= level < table.n_levels:
        raise ValidationError("level must be a nonzero table level")
    p_total = grid.rows * grid.cols
    _, tie_key = _normalized_scores(grid, budget)
    order = np.argsort(-tie_key, kind="stable")
    k = min(budget // table[level], p_total)
    levels = np.zeros(p_total, dtype=np.uint8)
    levels[order[:k]] = level
    return ResolutionMap(grid.rows, grid.cols, levels.reshape(grid.rows, grid.cols))


def brute_force_reference(
    grid: AttentionGrid, budget, table: RateTable = DEFAULT_TABLE
) -> ResolutionMap:
    """Plain-list reference implementation of :func:`select_resolutions`.

    Follows the published data flow literally: explicit candidate lists,
    re-sorted from scratch every iteration, with the same overshoot repair
    and tie-breaks.  Restricted to small instances; must match the optimized
    implementation exactly.
    """
    budget = check_budget(budget)
    rows, cols = grid.rows, grid.cols
    p_total = rows * cols
    if p_total > BRUTE_FORCE_MAX_PATCHES:
        raise ValidationError(
            "brute-force reference is bounded to %d patches" % BRUTE_FORCE_MAX_PATCHES
        )
    q = [int(b) for b in table.bytes_per_level]
    top = q[-1]

    a = [float(v) for v in grid.values.reshape(-1)]
    if all(v == 0.0 for v in a):
        a = [1.0] * p_total
    scale = budget / math.fsum(a)
    s = [v * scale for v in a]

    if budget <= q[1] * p_total:
        levels = [0] * p_total
        order = sorted(range(p_total), key=lambda i: (-a[i], i))
        for i in order[: budget // q[1]]:
            levels[i] = 1
        return ResolutionMap(rows, cols, np.array(levels, dtype=np.uint8).reshape(rows, cols))

    def floor_q(x):
        out = 0
        for v in q:
            if v <= x:
                out = v
        return out

    def ceil_q(x):
        for v in q:
            if v > x:
                return v
        return top

    bytes_ = [floor_q(x) for x in s]
    bytes_ = [q[1] if b == 0 else b for b in bytes_]
    total = sum(bytes_)

    while total > budget:
        cands = sorted(
            (i for i in range(p_total) if bytes_[i] > q[1]),
            key=lambda i: (a[i], -i),
        )
        i = cands[0]
        j = q.index(bytes_[i])
        bytes_[i] = q[j - 1]
        total -= q[j] - q[j - 1]

    work = list(s)
    while True:
        cands = []
        for i in range(p_total):
            if bytes_[i] == top:
                continue
            target = ceil_q(work[i])
            if total + (target - bytes_[i]) > budget:
                continue
            cands.append((target - work[i], -a[i], i, target))
        if not cands:
            break
        cands.sort()
        _, _, i, target = cands[0]
        total += target - bytes_[i]
        bytes_[i] = target
        work[i] = target + EPS

    levels = [q.index(b) for b in bytes_]
    return ResolutionMap(rows, cols, np.array(levels, dtype=np.uint8).reshape(rows, cols))
