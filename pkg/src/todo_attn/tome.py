"""Token merging (ToMe) baseline: bipartite soft matching, merge, unmerge.

Follows the latent-diffusion variant: one destination token is drawn per
non-overlapping 2x2 cell, every other token is a source, each source is
matched to its most cosine-similar destination, and the ``r`` best-matched
sources are averaged into their destinations. Unmerging copies a merged
destination back to the positions of the sources folded into it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import counters
from .attention import AttentionConfig, AttentionOutput, dense_attention
from .errors import RangeError, ShapeError
from .grid import TokenGrid, check_ratio

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# source rows per similarity tile; bounds the live score buffer
_SRC_CHUNK = 1024


def splitmix64(state: int) -> int:
    """The SplitMix64 finaliser applied to ``state + gamma``."""
    z = (state + _GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def cell_choices(seed: int, num_cells: int) -> np.ndarray:
    """Offset in ``0..3`` of the destination token inside each 2x2 cell.

    Cell ``k`` uses ``splitmix64(seed + k * gamma) % 4``, i.e. the ``k``-th
    output of a SplitMix64 stream seeded with ``seed``.
    """
    k = np.arange(num_cells, dtype=np.uint64)
    z = np.uint64(seed & _MASK64) + k * np.uint64(_GAMMA) + np.uint64(_GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    z = z ^ (z >> np.uint64(31))
    return (z % np.uint64(4)).astype(np.int64)


@dataclass(frozen=True, eq=False)
class TomePlan:
    height: int
    width: int
    dst_indices: np.ndarray
    src_indices: np.ndarray
    # parallel arrays, one entry per merged source, best match first
    match_src: np.ndarray
    match_dst: np.ndarray
    match_score: np.ndarray

    @property
    def r(self) -> int:
        return len(self.match_src)

    @property
    def num_tokens(self) -> int:
        return self.height * self.width

    @property
    def matches(self) -> list[tuple[int, int, float]]:
        return [
            (int(s), int(d), float(c))
            for s, d, c in zip(self.match_src, self.match_dst, self.match_score)
        ]

    @property
    def unmerged_src(self) -> np.ndarray:
        return np.setdiff1d(self.src_indices, self.match_src)

    def dst_slots(self) -> np.ndarray:
        """Position in ``dst_indices`` of each match's destination."""
        return np.searchsorted(self.dst_indices, self.match_dst)


def destination_indices(height: int, width: int, seed: int) -> np.ndarray:
    cells_y, cells_x = height // 2, width // 2
    k = np.arange(cells_y * cells_x)
    dy, dx = np.divmod(cell_choices(seed, k.size), 2)
    ys = 2 * (k // cells_x) + dy
    xs = 2 * (k % cells_x) + dx
    return np.sort(ys * width + xs)


def merge_count(ratio: float, height: int, width: int) -> int:
    """Tokens to merge for a merge ratio, capped at the number of sources."""
    ratio = check_ratio(ratio)
    n = height * width
    n_src = n - (height // 2) * (width // 2)
    return min(n_src, math.floor(ratio * n + 0.5))


def bipartite_soft_matching(tokens: TokenGrid, r: int, seed: int = 0) -> TomePlan:
    h, w = tokens.height, tokens.width
    if h < 2 or w < 2:
        raise ShapeError(f"grid {h}x{w} is too small for 2x2 destination cells")
    n = h * w
    dst = destination_indices(h, w, seed)
    src = np.setdiff1d(np.arange(n), dst)
    if not (0 <= r <= src.size):
        raise RangeError(f"r must be in [0, {src.size}], got {r}")
    empty = np.empty(0, dtype=np.int64)
    if r == 0:
        return TomePlan(h, w, dst, src, empty, empty, np.empty(0, dtype=np.float32))

    rows = tokens.tokens
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    unit = rows / np.where(norms == 0.0, np.float32(1.0), norms)
    unit_dst_t = np.ascontiguousarray(unit[dst].T)

    best = np.empty(src.size, dtype=np.int64)
    score = np.empty(src.size, dtype=np.float32)
    for start in range(0, src.size, _SRC_CHUNK):
        stop = min(start + _SRC_CHUNK, src.size)
        sims = unit[src[start:stop]] @ unit_dst_t
        counters.bump("similarity_pairs", sims.size)
        # argmax keeps the first maximum, i.e. the lowest dst index
        idx = sims.argmax(axis=1)
        best[start:stop] = idx
        score[start:stop] = sims[np.arange(stop - start), idx]

    order = np.lexsort((src, -score))[:r]
    return TomePlan(h, w, dst, src, src[order], dst[best[order]], score[order])


def _check_plan(plan: TomePlan, height: int, width: int) -> None:
    if (plan.height, plan.width) != (height, width):
        raise ShapeError(
            f"plan built for a {plan.height}x{plan.width} grid, got {height}x{width}"
        )


def tome_merge(tokens: TokenGrid, plan: TomePlan) -> np.ndarray:
    """Merged ``(n - r, dim)`` sequence: destinations first, then surviving sources.

    A destination that absorbed ``m`` sources becomes the plain mean of the
    ``m + 1`` vectors. Both blocks are in ascending original index.
    """
    _check_plan(plan, tokens.height, tokens.width)
    rows = tokens.tokens.astype(np.float64)
    acc = rows[plan.dst_indices].copy()
    counts = np.ones(plan.dst_indices.size)
    slots = plan.dst_slots()
    np.add.at(acc, slots, rows[plan.match_src])
    np.add.at(counts, slots, 1.0)
    merged = acc / counts[:, None]
    return np.concatenate([merged, rows[plan.unmerged_src]]).astype(np.float32)


def tome_unmerge(merged, plan: TomePlan) -> TokenGrid:
    merged = np.asarray(merged, dtype=np.float32)
    expected = plan.num_tokens - plan.r
    if merged.ndim != 2 or merged.shape[0] != expected:
        raise ShapeError(f"merged sequence must have {expected} rows, got shape {merged.shape}")
    n_dst = plan.dst_indices.size
    out = np.empty((plan.num_tokens, merged.shape[1]), dtype=np.float32)
    out[plan.dst_indices] = merged[:n_dst]
    out[plan.unmerged_src] = merged[n_dst:]
    out[plan.match_src] = merged[plan.dst_slots()]
    return TokenGrid(out.reshape(plan.height, plan.width, merged.shape[1]))


def tome_attention(
    q_tokens: TokenGrid,
    r: int,
    seed: int,
    cfg: AttentionConfig,
    *,
    threads: int = 1,
) -> AttentionOutput:
    """Merge, run dense self-attention on the ``n - r`` merged tokens, unmerge."""
    plan = bipartite_soft_matching(q_tokens, r, seed)
    merged = tome_merge(q_tokens, plan)
    seq = TokenGrid(merged.reshape(1, merged.shape[0], merged.shape[1]))
    attended = dense_attention(seq, seq, seq, cfg, threads=threads)
    return AttentionOutput(tome_unmerge(attended.out.tokens, plan))
