"""Fidelity metrics and the neighbourhood token-redundancy analyser."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from . import counters
from .errors import RangeError, ShapeError
from .grid import TokenGrid

# rows per tile when scanning the full n x n similarity matrix
_TILE = 512


@dataclass(frozen=True, eq=False)
class ImagePlane:
    """Single-channel image, ``pixels`` shaped ``(height, width)``."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.array(self.pixels, dtype=np.float32, copy=True)
        if arr.ndim != 2 or min(arr.shape) < 1:
            raise ShapeError(f"image plane must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ShapeError("image plane contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def grid_planes(grid: TokenGrid) -> list[ImagePlane]:
    """Split a token grid into one image plane per channel."""
    return [ImagePlane(grid.data[:, :, c]) for c in range(grid.dim)]


@dataclass(frozen=True)
class SimilarityStats:
    neighborhood: int
    min_sim: float
    mean_sim: float
    max_sim: float
    top3_fraction: float


def _values(x: Union[ImagePlane, TokenGrid, np.ndarray]) -> np.ndarray:
    if isinstance(x, ImagePlane):
        return x.pixels
    if isinstance(x, TokenGrid):
        return x.data
    return np.asarray(x)


def mse(a, b) -> float:
    """Mean squared difference, accumulated in float64."""
    va, vb = _values(a), _values(b)
    if va.shape != vb.shape:
        raise ShapeError(f"shape mismatch: {va.shape} vs {vb.shape}")
    if va.size == 0:
        raise ShapeError("mse of empty inputs")
    diff = va.astype(np.float64) - vb.astype(np.float64)
    return float(np.mean(diff * diff))


def hpf_magnitude(img: ImagePlane) -> float:
    """Mean absolute response of the 4-neighbour Laplacian over the valid interior."""
    if img.height < 3 or img.width < 3:
        raise ShapeError(f"image must be at least 3x3, got {img.height}x{img.width}")
    p = img.pixels.astype(np.float64)
    response = (
        4.0 * p[1:-1, 1:-1]
        - p[:-2, 1:-1]
        - p[2:, 1:-1]
        - p[1:-1, :-2]
        - p[1:-1, 2:]
    )
    return float(np.mean(np.abs(response)))


def cosine_similarity(u, v) -> float:
    """Cosine of the angle between two token rows, clamped to ``[-1, 1]``.

    A zero vector yields 0.0 and bumps the ``zero_vector_cosine`` counter.
    """
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ShapeError(f"dim mismatch: {u.size} vs {v.size}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        counters.bump("zero_vector_cosine")
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def normalize_rows(rows: np.ndarray) -> np.ndarray:
    """L2-normalise rows in float64; zero rows stay zero so their cosines come out 0."""
    rows = np.asarray(rows, dtype=np.float64)
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    zero = norms[:, 0] == 0.0
    if zero.any():
        counters.bump("zero_vector_cosine", int(zero.sum()))
    return rows / np.where(norms == 0.0, 1.0, norms)


def _neighbour_offsets(k: int):
    r = k // 2
    return [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1) if (dy, dx) != (0, 0)]


def _local_stats(unit: np.ndarray, k: int):
    """Per-token min/mean/max cosine over the truncated k x k neighbourhood."""
    h, w, _ = unit.shape
    lo = np.full((h, w), np.inf)
    hi = np.full((h, w), -np.inf)
    total = np.zeros((h, w))
    count = np.zeros((h, w))
    for dy, dx in _neighbour_offsets(k):
        ys = slice(max(0, -dy), h - max(0, dy))
        xs = slice(max(0, -dx), w - max(0, dx))
        yn = slice(max(0, dy), h - max(0, -dy))
        xn = slice(max(0, dx), w - max(0, -dx))
        sim = np.clip(np.einsum("ijc,ijc->ij", unit[ys, xs], unit[yn, xn]), -1.0, 1.0)
        lo[ys, xs] = np.minimum(lo[ys, xs], sim)
        hi[ys, xs] = np.maximum(hi[ys, xs], sim)
        total[ys, xs] += sim
        count[ys, xs] += 1
    return lo, total / count, hi


def _top3_indices(sims: np.ndarray) -> np.ndarray:
    """Column indices of the 3 largest entries per row, ties to the lower index."""
    third = -np.partition(-sims, 2, axis=1)[:, 2]
    cand = sims >= third[:, None]
    result = np.empty((sims.shape[0], 3), dtype=np.int64)
    simple = cand.sum(axis=1) == 3
    if simple.any():
        result[simple] = np.nonzero(cand[simple])[1].reshape(-1, 3)
    for row in np.nonzero(~simple)[0]:
        idx = np.nonzero(cand[row])[0]
        order = np.lexsort((idx, -sims[row, idx]))
        result[row] = idx[order[:3]]
    return result


def top3_fraction(grid: TokenGrid) -> float:
    """Fraction of tokens whose 3 most cosine-similar tokens all lie in their 3x3 neighbourhood."""
    n = grid.num_tokens
    if n < 4:
        raise ShapeError(f"need at least 4 tokens for a top-3 search, got {n}")
    unit = normalize_rows(grid.tokens)
    ys, xs = np.divmod(np.arange(n), grid.width)
    hits = 0
    for start in range(0, n, _TILE):
        stop = min(start + _TILE, n)
        sims = np.clip(unit[start:stop] @ unit.T, -1.0, 1.0)
        rows = np.arange(start, stop)
        sims[rows - start, rows] = -np.inf
        top = _top3_indices(sims)
        near = (np.abs(ys[top] - ys[rows, None]) <= 1) & (np.abs(xs[top] - xs[rows, None]) <= 1)
        hits += int(near.all(axis=1).sum())
    return hits / n


def neighborhood_stats(grid: TokenGrid, k: int = 3) -> SimilarityStats:
    """Grid-wide cosine-redundancy statistics for ``k x k`` neighbourhoods.

    For every token, the lowest, mean and highest cosine similarity to the
    other tokens of its centred ``k x k`` window (truncated at borders) are
    taken; the reported values are arithmetic means of those per-token values
    over the grid. ``top3_fraction`` always uses the 3x3 window.
    """
    if k not in (3, 5):
        raise RangeError(f"neighbourhood size must be 3 or 5, got {k}")
    if grid.height < k or grid.width < k:
        raise ShapeError(f"grid {grid.height}x{grid.width} is smaller than the {k}x{k} window")
    unit = normalize_rows(grid.tokens).reshape(grid.height, grid.width, grid.dim)
    lo, mean, hi = _local_stats(unit, k)
    return SimilarityStats(
        neighborhood=k,
        min_sim=float(lo.mean()),
        mean_sim=float(mean.mean()),
        max_sim=float(hi.mean()),
        top3_fraction=top3_fraction(grid),
    )
