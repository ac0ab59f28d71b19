"""Token grids and the nearest-neighbour downsampling operator."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import counters
from .errors import RangeError, ShapeError


@dataclass(frozen=True, eq=False)
class TokenGrid:
    """An ``height x width`` grid of ``dim``-channel float32 tokens.

    ``data`` has shape ``(height, width, dim)`` in C order, so the flat buffer
    matches the row-major layout ``data[(y * width + x) * dim + c]``. The array
    is marked read-only on construction.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise ShapeError(f"token grid data must be 3-D (h, w, d), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ShapeError(f"token grid dimensions must be positive, got {arr.shape}")
        if arr is self.data:
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def num_tokens(self) -> int:
        return self.height * self.width

    @property
    def tokens(self) -> np.ndarray:
        """Read-only ``(n, dim)`` view in row-major token order."""
        return self.data.reshape(self.num_tokens, self.dim)

    @classmethod
    def from_flat(cls, values, height: int, width: int, dim: int) -> TokenGrid:
        values = np.asarray(values, dtype=np.float32).ravel()
        if values.size != height * width * dim:
            raise ShapeError(
                f"expected {height * width * dim} values for {height}x{width}x{dim}, got {values.size}"
            )
        return cls(values.reshape(height, width, dim))

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def equals(self, other: TokenGrid) -> bool:
        """Bitwise equality of shape and payload."""
        return self.shape == other.shape and self.data.tobytes() == other.data.tobytes()


@dataclass(frozen=True)
class DownsampleSpec:
    out_height: int
    out_width: int

    def __post_init__(self):
        if self.out_height < 1 or self.out_width < 1:
            raise ShapeError(
                f"downsample output must be positive, got {self.out_height}x{self.out_width}"
            )

    @classmethod
    def identity(cls, grid: TokenGrid) -> DownsampleSpec:
        return cls(grid.height, grid.width)

    @classmethod
    def from_factor(cls, height: int, width: int, factor: int) -> DownsampleSpec:
        return cls(max(1, height // factor), max(1, width // factor))

    def is_identity_for(self, height: int, width: int) -> bool:
        return self.out_height == height and self.out_width == width


@dataclass(frozen=True)
class MergeRatio:
    """Proportion of tokens removed, in ``[0, 1)``."""

    ratio: float

    def __post_init__(self):
        check_ratio(self.ratio)

    def __float__(self) -> float:
        return float(self.ratio)


def check_ratio(ratio: float) -> float:
    ratio = float(ratio)
    if not (0.0 <= ratio < 1.0):
        raise RangeError(f"ratio must be in [0,1), got {ratio}")
    return ratio


def _source_indices(n_in: int, n_out: int) -> np.ndarray:
    # top-left anchored: output i reads input floor(i * n_in / n_out)
    return (np.arange(n_out, dtype=np.int64) * n_in) // n_out


def nearest_downsample(grid: TokenGrid, spec: DownsampleSpec) -> TokenGrid:
    """Subsample ``grid`` to ``spec``'s shape by copying the nearest source token.

    Output token ``(i, j)`` is input token ``(i*h // oh, j*w // ow)``. Work is
    proportional to the output size; no token pairs are compared.
    """
    h, w = grid.height, grid.width
    oh, ow = spec.out_height, spec.out_width
    if oh > h or ow > w:
        raise ShapeError(f"downsample target {oh}x{ow} exceeds input grid {h}x{w}")
    counters.bump("downsample_tokens", oh * ow)
    if oh == h and ow == w:
        return grid
    rows = _source_indices(h, oh)
    cols = _source_indices(w, ow)
    return TokenGrid(grid.data[rows[:, None], cols[None, :]])


def ratio_to_spec(ratio: float | MergeRatio, height: int, width: int) -> DownsampleSpec:
    """Per-axis output shape that removes roughly ``ratio`` of the tokens.

    Ratios ``1 - 1/s**2`` map to an exact ``s``-fold reduction per axis when
    ``s`` divides both sides.
    """
    ratio = check_ratio(float(ratio))
    if height < 1 or width < 1:
        raise ShapeError(f"grid shape must be positive, got {height}x{width}")
    keep = math.sqrt(1.0 - ratio)

    def axis(n: int) -> int:
        return min(n, max(1, math.floor(n * keep + 0.5)))

    return DownsampleSpec(axis(height), axis(width))


def flatten(grid: TokenGrid) -> np.ndarray:
    """Token rows ``(n, dim)`` in row-major spatial order."""
    return grid.tokens


def unflatten(rows, height: int, width: int) -> TokenGrid:
    rows = np.asarray(rows, dtype=np.float32)
    if rows.ndim != 2:
        raise ShapeError(f"token rows must be 2-D (n, dim), got shape {rows.shape}")
    if rows.shape[0] != height * width:
        raise ShapeError(
            f"count mismatch: {rows.shape[0]} rows cannot fill a {height}x{width} grid"
        )
    return TokenGrid(rows.reshape(height, width, rows.shape[1]))
