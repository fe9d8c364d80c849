"""Block-sparse multi-head attention.

The sparsification pipeline per head is:

1. pool queries and keys over blocks of ``block_size`` consecutive tokens and
   softmax the pooled logits into a cheap block-level probability map;
2. rank blocks by probability and keep the top ``m``, where ``m`` satisfies
   both a CDF coverage threshold ``tau`` and a sparsity-ratio floor ``rho``
   (or an explicit per-head budget ``c``);
3. run exact attention with the logits of inactive blocks replaced by ``-inf``.

Blocks touching *protected* tokens (camera/anchor tokens) are always active and
are accounted on top of the budget, so budgets stay comparable across heads.
Selection is pure numpy (nothing differentiates through it); the exact
attention runs on tape tensors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor


class DegenerateRowError(RuntimeError):
    """A query row ended up with zero active key blocks."""


@dataclass(frozen=True)
class HeadParams:
    """Projection weights of one attention head (each ``d_model x d_head``)."""

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor

    def __post_init__(self):
        shapes = {self.w_q.shape, self.w_k.shape, self.w_v.shape}
        if len(shapes) != 1 or self.w_q.data.ndim != 2:
            raise ShapeError(f"head projections must share one 2-D shape, got {shapes}")
        for t in (self.w_q, self.w_k, self.w_v):
            if not np.isfinite(t.data).all():
                raise ValueError("head projections must be finite")

    @property
    def d_model(self) -> int:
        return self.w_q.shape[0]

    @property
    def d_head(self) -> int:
        return self.w_q.shape[1]


@dataclass(frozen=True)
class ApproxAttentionMap:
    """Pooled block-level attention probabilities for one head.

    ``probs`` has one row per query block and one column per key block; each
    row sums to 1.  ``protected_rows``/``protected_cols`` are *block* indices
    whose token range contains a protected token.
    """

    probs: np.ndarray
    block_size: int
    n_tokens: int
    protected_rows: frozenset[int]
    protected_cols: frozenset[int]

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", p)
        if p.ndim != 2:
            raise ShapeError("approx map must be 2-D")
        expected = -(-self.n_tokens // self.block_size)
        if p.shape != (expected, expected):
            raise ShapeError(
                f"approx map grid {p.shape} does not match ceil({self.n_tokens}/{self.block_size})")
        if not np.isfinite(p).all() or (p < 0).any():
            raise ValueError("approx map probabilities must be finite and non-negative")

    @property
    def grid(self) -> tuple[int, int]:
        return self.probs.shape

    @property
    def n_blocks(self) -> int:
        return self.probs.shape[0] * self.probs.shape[1]

    def protected_blocks(self) -> frozenset[tuple[int, int]]:
        n_rows, n_cols = self.grid
        out = set()
        for r in self.protected_rows:
            out.update((r, c) for c in range(n_cols))
        for c in self.protected_cols:
            out.update((r, c) for r in range(n_rows))
        return frozenset(out)


@dataclass(frozen=True)
class BlockSelection:
    """Active block set for one head.

    ``budget_used`` counts only score-selected blocks; protected blocks that
    were not already in the scored prefix ride on top, so ``len(active)`` may
    exceed ``budget_used``.
    """

    active: frozenset[tuple[int, int]]
    budget_used: int
    grid: tuple[int, int]
    block_size: int

    def __post_init__(self):
        n_rows, n_cols = self.grid
        for (r, c) in self.active:
            if not (0 <= r < n_rows and 0 <= c < n_cols):
                raise ValueError(f"active block {(r, c)} outside grid {self.grid}")
        if not (0 <= self.budget_used <= n_rows * n_cols):
            raise ValueError(f"budget_used {self.budget_used} outside [0, {n_rows * n_cols}]")

    @property
    def n_blocks(self) -> int:
        return self.grid[0] * self.grid[1]


def _as_array(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)


def project_qkv(x: Tensor, params: HeadParams) -> tuple[Tensor, Tensor, Tensor]:
    """Project token features into per-head query/key/value tensors."""
    if x.data.ndim != 2 or x.shape[1] != params.d_model:
        raise ShapeError(f"features {x.shape} do not match head d_model {params.d_model}")
    return ad.matmul(x, params.w_q), ad.matmul(x, params.w_k), ad.matmul(x, params.w_v)


def dense_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Exact scaled dot-product attention ``softmax(QK^T / sqrt(d_head)) V``."""
    _check_qkv(q, k, v)
    logits = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(k.shape[1]))
    return ad.matmul(ad.softmax_rows(logits), v)


def _check_qkv(q, k, v) -> None:
    for t in (q, k, v):
        if t.data.ndim != 2:
            raise ShapeError("attention inputs must be 2-D")
    if q.shape[1] != k.shape[1]:
        raise ShapeError(f"query/key widths differ: {q.shape} vs {k.shape}")
    if k.shape[0] != v.shape[0]:
        raise ShapeError(f"key/value row counts differ: {k.shape} vs {v.shape}")


def _softmax_rows_np(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _pool_rows_np(x: np.ndarray, block: int) -> np.ndarray:
    n = x.shape[0]
    n_out = -(-n // block)
    return np.stack([x[r * block:min(n, (r + 1) * block)].mean(axis=0) for r in range(n_out)])


def approx_map(q, k, block_size: int,
               protected_tokens: Iterable[int] = (),
               *, scaled: bool = False) -> ApproxAttentionMap:
    """Pool Q and K over token blocks and softmax the pooled logits.

    By default the pooled logits are *not* divided by ``sqrt(d_head)``; pass
    ``scaled=True`` to apply the same temperature as exact attention.  The map
    is a selection heuristic only, so it is computed outside any tape.
    """
    q_arr, k_arr = _as_array(q), _as_array(k)
    if q_arr.ndim != 2 or k_arr.ndim != 2 or q_arr.shape != k_arr.shape:
        raise ShapeError(f"approx_map needs matching 2-D Q/K, got {q_arr.shape} vs {k_arr.shape}")
    if not isinstance(block_size, (int, np.integer)) or block_size < 1:
        raise ValueError(f"block_size must be a positive int, got {block_size!r}")
    n_tokens = q_arr.shape[0]
    protected = sorted(set(int(t) for t in protected_tokens))
    for t in protected:
        if not (0 <= t < n_tokens):
            raise ValueError(f"protected token {t} outside [0, {n_tokens})")
    logits = _pool_rows_np(q_arr, block_size) @ _pool_rows_np(k_arr, block_size).T
    if scaled:
        logits = logits / math.sqrt(q_arr.shape[1])
    blocks_hit = frozenset(t // block_size for t in protected)
    return ApproxAttentionMap(
        probs=_softmax_rows_np(logits),
        block_size=int(block_size),
        n_tokens=n_tokens,
        protected_rows=blocks_hit,
        protected_cols=blocks_hit,
    )


def _ranked_blocks(amap: ApproxAttentionMap) -> list[tuple[int, int]]:
    """All blocks sorted by probability descending, ties by (row, col)."""
    n_rows, n_cols = amap.grid
    p = amap.probs
    return sorted(
        ((r, c) for r in range(n_rows) for c in range(n_cols)),
        key=lambda rc: (-p[rc[0], rc[1]], rc[0], rc[1]),
    )


def select_blocks(amap: ApproxAttentionMap, tau: float, rho: float) -> BlockSelection:
    """Select blocks covering a ``tau`` fraction of mass, at least ``floor(B*(1-rho))``.

    The CDF scan runs over all blocks globally (denominator = total map mass);
    protected blocks are unioned in afterwards without consuming budget.
    """
    if not (0.0 <= tau <= 1.0):
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    if not (0.0 <= rho <= 1.0):
        raise ValueError(f"rho must be in [0, 1], got {rho}")
    order = _ranked_blocks(amap)
    probs = np.array([amap.probs[rc] for rc in order])
    cum = np.cumsum(probs)
    total = cum[-1] if len(cum) else 0.0
    target = tau * total
    m_tau = 0 if target <= 0.0 else int(np.searchsorted(cum, target, side="left")) + 1
    floor_blocks = int(math.floor(amap.n_blocks * (1.0 - rho)))
    m = min(max(m_tau, floor_blocks), amap.n_blocks)
    active = frozenset(order[:m]) | amap.protected_blocks()
    return BlockSelection(active=active, budget_used=m,
                          grid=amap.grid, block_size=amap.block_size)


def select_top_c(amap: ApproxAttentionMap, c: int) -> BlockSelection:
    """Select exactly the ``c`` highest-probability blocks plus protected ones."""
    if not isinstance(c, (int, np.integer)):
        raise ValueError(f"budget c must be an int, got {c!r}")
    c = int(c)
    if not (0 <= c <= amap.n_blocks):
        raise ValueError(f"budget c={c} outside [0, {amap.n_blocks}]")
    order = _ranked_blocks(amap)
    active = frozenset(order[:c]) | amap.protected_blocks()
    return BlockSelection(active=active, budget_used=c,
                          grid=amap.grid, block_size=amap.block_size)


def masked_attention(q: Tensor, k: Tensor, v: Tensor, sel: BlockSelection) -> Tensor:
    """Exact attention with inactive blocks masked to ``-inf`` before softmax.

    With every block active this is bit-identical to :func:`dense_attention`.
    A query row whose blocks are all inactive raises :class:`DegenerateRowError`
    before any arithmetic happens.
    """
    _check_qkv(q, k, v)
    n_q, n_k = q.shape[0], k.shape[0]
    b = sel.block_size
    expected = (-(-n_q // b), -(-n_k // b))
    if sel.grid != expected:
        raise ShapeError(f"selection grid {sel.grid} does not match token grid {expected}")
    block_mask = np.zeros(sel.grid, dtype=bool)
    for (r, c) in sel.active:
        block_mask[r, c] = True
    if not block_mask.any(axis=1).all():
        dead = int(np.flatnonzero(~block_mask.any(axis=1))[0])
        raise DegenerateRowError(f"query block row {dead} has no active key blocks")
    additive = np.where(np.repeat(np.repeat(block_mask, b, axis=0), b, axis=1)[:n_q, :n_k],
                        0.0, -np.inf)
    logits = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(k.shape[1]))
    logits = ad.add(logits, Tensor(additive))
    return ad.matmul(ad.softmax_rows(logits), v)


def achieved_sparsity(selections: Iterable[BlockSelection]) -> float:
    """``1 - active/total`` over a collection of per-head selections."""
    sels = list(selections)
    if not sels:
        raise ValueError("achieved_sparsity needs at least one selection")
    active = sum(len(s.active) for s in sels)
    total = sum(s.n_blocks for s in sels)
    return 1.0 - active / total
