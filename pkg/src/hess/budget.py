"""Per-layer attention budget reallocation by iterative water-filling.

Head budgets are block counts.  Reallocation pools the per-head baselines into
one layer total, splits it proportionally to sensitivity weights, then caps
overflowing heads at ``c_max`` and redistributes their surplus among uncapped
heads proportionally to the heads' *original* weights, repeating until no head
overflows.  The real-valued fixed point is integerised by largest remainder so
the total is conserved exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

_CAP_EPS = 1e-12
_SNAP_EPS = 1e-9


class InfeasibleBudgetError(ValueError):
    """The pooled budget cannot fit under the per-head cap."""


@dataclass(frozen=True)
class BudgetAllocation:
    """Result of one layer's reallocation.

    ``ideal`` holds the pre-capping proportional shares ``c_total * w_h``;
    ``fixed_point`` the real-valued allocation after cap-and-redistribute
    converges; ``final`` the integer budgets.  ``baselines`` and ``weights``
    are carried through when known so reports can show the full story.
    """

    ideal: tuple[float, ...]
    fixed_point: tuple[float, ...]
    final: tuple[int, ...]
    c_total: int
    c_max: int
    baselines: tuple[int, ...] | None = None
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if not (len(self.ideal) == len(self.fixed_point) == len(self.final)):
            raise ValueError("ideal/fixed_point/final length mismatch")
        if sum(self.final) != self.c_total:
            raise ValueError(
                f"budget not conserved: sum(final)={sum(self.final)} != c_total={self.c_total}")
        for c in self.final:
            if not (0 <= c <= self.c_max):
                raise ValueError(f"final budget {c} outside [0, {self.c_max}]")
        if self.baselines is not None and len(self.baselines) != len(self.final):
            raise ValueError("baselines length mismatch")

    @property
    def n_heads(self) -> int:
        return len(self.final)


def total_budget(baselines) -> int:
    """Pool per-head baselines into the layer total."""
    values = [int(b) for b in baselines]
    if not values:
        raise ValueError("total_budget needs at least one baseline")
    if any(b < 0 for b in values):
        raise ValueError(f"baselines must be non-negative, got {values}")
    return sum(values)


def realloc_weights(scores) -> np.ndarray:
    """Normalise sensitivity scores to the simplex.

    All-zero scores fall back to uniform weights (with a warning) so a dead
    layer still divides its budget evenly.
    """
    s = np.asarray(list(scores), dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("scores must be a non-empty 1-D collection")
    if not np.isfinite(s).all():
        raise ValueError(f"scores must be finite, got {s}")
    if (s < 0).any():
        raise ValueError(f"scores must be non-negative, got {s}")
    total = s.sum()
    if total <= 0.0:
        log.warning("all-zero sensitivity scores; falling back to uniform weights")
        return np.full(s.size, 1.0 / s.size)
    return s / total


def waterfill(c_total: int, weights, c_max: int,
              baselines=None) -> BudgetAllocation:
    """Cap-and-redistribute until no head exceeds ``c_max``, then integerise.

    Redistribution is proportional to the *original* weights of the still
    uncapped heads; if those weights sum to zero the surplus spreads evenly.
    Terminates in at most one round per head.
    """
    w = np.asarray(list(weights), dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty 1-D collection")
    if not np.isfinite(w).all() or (w < 0).any():
        raise ValueError(f"weights must be finite and non-negative, got {w}")
    if abs(w.sum() - 1.0) > 1e-6:
        raise ValueError(f"weights must lie on the simplex, sum={w.sum()!r}")
    w = w / w.sum()
    c_total = int(c_total)
    c_max = int(c_max)
    if c_total < 0 or c_max < 0:
        raise ValueError("budgets must be non-negative")
    n = w.size
    if c_total > n * c_max:
        raise InfeasibleBudgetError(
            f"c_total={c_total} exceeds {n} heads * c_max={c_max}")

    ideal = c_total * w
    alloc = ideal.copy()
    capped = np.zeros(n, dtype=bool)
    for _ in range(n + 1):
        over = ~capped & (alloc > c_max + _CAP_EPS)
        if not over.any():
            break
        surplus = float((alloc[over] - c_max).sum())
        alloc[over] = c_max
        capped |= over
        uncapped = ~capped
        if not uncapped.any():
            # feasibility guarantees the surplus is rounding noise here
            break
        w_left = w[uncapped].sum()
        if w_left > 0.0:
            alloc[uncapped] += surplus * w[uncapped] / w_left
        else:
            alloc[uncapped] += surplus / uncapped.sum()

    final = _integerise(alloc, capped, c_total, c_max)
    return BudgetAllocation(
        ideal=tuple(float(v) for v in ideal),
        fixed_point=tuple(float(v) for v in alloc),
        final=tuple(int(v) for v in final),
        c_total=c_total,
        c_max=c_max,
        baselines=None if baselines is None else tuple(int(b) for b in baselines),
        weights=tuple(float(v) for v in w),
    )


def _integerise(alloc: np.ndarray, capped: np.ndarray,
                c_total: int, c_max: int) -> np.ndarray:
    """Largest-remainder rounding over uncapped heads, ties by head index."""
    final = np.where(capped, c_max, 0).astype(np.int64)
    uncapped_idx = np.flatnonzero(~capped)
    remaining = c_total - int(capped.sum()) * c_max
    if uncapped_idx.size == 0:
        if remaining != 0:
            raise InfeasibleBudgetError(
                f"all heads capped with {remaining} budget left over")
        return final
    vals = alloc[uncapped_idx].copy()
    near = np.abs(vals - np.round(vals)) < _SNAP_EPS
    vals[near] = np.round(vals[near])
    floors = np.floor(vals).astype(np.int64)
    extra = remaining - int(floors.sum())
    if not (0 <= extra <= uncapped_idx.size):
        raise AssertionError(
            f"largest-remainder bookkeeping broke: extra={extra} for {uncapped_idx.size} heads")
    remainders = vals - floors
    order = sorted(range(uncapped_idx.size),
                   key=lambda i: (-remainders[i], uncapped_idx[i]))
    final[uncapped_idx] = floors
    for i in order[:extra]:
        final[uncapped_idx[i]] += 1
    return final


def allocate_layer(scores, baselines, c_max: int) -> BudgetAllocation:
    """Full per-layer pipeline: pool baselines, weight by scores, water-fill."""
    base = [int(b) for b in baselines]
    score_list = list(scores)
    c_max = int(c_max)
    if len(base) != len(score_list):
        raise ValueError("scores/baselines length mismatch")
    for b in base:
        if not (0 <= b <= c_max):
            raise ValueError(f"baseline {b} outside [0, {c_max}]")
    weights = realloc_weights(score_list)
    return waterfill(total_budget(base), weights, c_max, baselines=base)
