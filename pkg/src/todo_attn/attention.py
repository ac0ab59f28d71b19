"""Dense scaled-dot-product attention and token-downsampled (ToDo) attention.

The kernel streams query rows in fixed blocks of ``ROW_BLOCK`` so only one
``ROW_BLOCK x n_kv`` logit tile per task is alive at a time. The block
decomposition does not depend on the thread count, which keeps outputs
bitwise identical between single-threaded and parallel runs.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NonFiniteError, RangeError, ShapeError
from .grid import DownsampleSpec, TokenGrid, nearest_downsample

ROW_BLOCK = 256
INT64_MAX = 2**63 - 1


@dataclass(frozen=True)
class AttentionConfig:
    num_heads: int
    head_dim: int
    scale: Optional[float] = None

    def __post_init__(self):
        if self.num_heads < 1 or self.head_dim < 1:
            raise RangeError(
                f"num_heads and head_dim must be positive, got {self.num_heads}, {self.head_dim}"
            )
        if self.scale is None:
            object.__setattr__(self, "scale", 1.0 / math.sqrt(self.head_dim))
        elif not (self.scale > 0 and math.isfinite(self.scale)):
            raise RangeError(f"scale must be a positive finite number, got {self.scale}")

    @classmethod
    def for_dim(cls, dim: int, num_heads: int = 1, scale: Optional[float] = None) -> AttentionConfig:
        if num_heads < 1 or dim % num_heads:
            raise ShapeError(f"dim {dim} is not divisible by num_heads {num_heads}")
        return cls(num_heads, dim // num_heads, scale)

    @property
    def model_dim(self) -> int:
        return self.num_heads * self.head_dim


@dataclass(frozen=True, eq=False)
class AttentionOutput:
    out: TokenGrid
    # (num_heads, n_q) row maxima of the scaled logits, when requested
    probe: Optional[np.ndarray] = None


def _check_inputs(q: TokenGrid, k: TokenGrid, v: TokenGrid, cfg: AttentionConfig) -> None:
    if not (q.dim == k.dim == v.dim):
        raise ShapeError(f"q, k, v dims differ: {q.dim}, {k.dim}, {v.dim}")
    if q.dim != cfg.model_dim:
        raise ShapeError(
            f"token dim {q.dim} != num_heads*head_dim = {cfg.num_heads}*{cfg.head_dim}"
        )
    if k.num_tokens != v.num_tokens:
        raise ShapeError(f"k and v token counts differ: {k.num_tokens} vs {v.num_tokens}")
    for name, g in (("q", q), ("k", k), ("v", v)):
        if not g.is_finite():
            raise NonFiniteError(f"{name} contains NaN or Inf")


def _split_heads(rows: np.ndarray, cfg: AttentionConfig) -> np.ndarray:
    # head h owns channels [h*head_dim, (h+1)*head_dim)
    n = rows.shape[0]
    return np.ascontiguousarray(rows.reshape(n, cfg.num_heads, cfg.head_dim).transpose(1, 0, 2))


def _block_softmax(q_block: np.ndarray, k_t: np.ndarray):
    """Unnormalised max-subtracted softmax numerators, row sums and row maxima."""
    logits = q_block @ k_t
    row_max = logits.max(axis=1)
    logits -= row_max[:, None]
    np.exp(logits, out=logits)
    return logits, logits.sum(axis=1, dtype=np.float32), row_max


def _prepare(q: TokenGrid, k: TokenGrid, v: TokenGrid, cfg: AttentionConfig):
    scale = np.float32(cfg.scale)
    qh = _split_heads(q.tokens, cfg) * scale
    k_t = np.ascontiguousarray(_split_heads(k.tokens, cfg).transpose(0, 2, 1))
    vh = _split_heads(v.tokens, cfg)
    return qh, k_t, vh


def dense_attention(
    q: TokenGrid,
    k: TokenGrid,
    v: TokenGrid,
    cfg: AttentionConfig,
    *,
    threads: int = 1,
    probe: bool = False,
) -> AttentionOutput:
    """Multi-head ``softmax(scale * Q K^T) V`` over flattened token grids.

    K and V may live on a different grid than Q (cross-attention shapes). The
    output has Q's grid shape.
    """
    _check_inputs(q, k, v, cfg)
    if threads < 1:
        raise RangeError(f"threads must be >= 1, got {threads}")
    qh, k_t, vh = _prepare(q, k, v, cfg)
    n_q = q.num_tokens
    out = np.empty((n_q, cfg.num_heads, cfg.head_dim), dtype=np.float32)
    maxima = np.empty((cfg.num_heads, n_q), dtype=np.float32) if probe else None

    def task(item):
        h, start = item
        stop = min(start + ROW_BLOCK, n_q)
        weights, denom, row_max = _block_softmax(qh[h, start:stop], k_t[h])
        out[start:stop, h] = (weights @ vh[h]) / denom[:, None]
        if maxima is not None:
            maxima[h, start:stop] = row_max

    tasks = [(h, s) for h in range(cfg.num_heads) for s in range(0, n_q, ROW_BLOCK)]
    if threads == 1:
        for item in tasks:
            task(item)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(task, tasks))

    grid = TokenGrid(out.reshape(q.height, q.width, q.dim))
    return AttentionOutput(grid, maxima)


def attention_weights(q: TokenGrid, k: TokenGrid, cfg: AttentionConfig) -> np.ndarray:
    """Normalised attention probabilities ``(num_heads, n_q, n_kv)``.

    Materialises the full map, so it is meant for small diagnostic inputs.
    Uses the same block routine as :func:`dense_attention`.
    """
    _check_inputs(q, k, k, cfg)
    qh, k_t, _ = _prepare(q, k, k, cfg)
    probs = np.empty((cfg.num_heads, q.num_tokens, k.num_tokens), dtype=np.float32)
    for h in range(cfg.num_heads):
        for start in range(0, q.num_tokens, ROW_BLOCK):
            stop = min(start + ROW_BLOCK, q.num_tokens)
            weights, denom, _ = _block_softmax(qh[h, start:stop], k_t[h])
            probs[h, start:stop] = weights / denom[:, None]
    return probs


def todo_attention(
    q: TokenGrid,
    k: TokenGrid,
    v: TokenGrid,
    spec: DownsampleSpec,
    cfg: AttentionConfig,
    *,
    threads: int = 1,
    probe: bool = False,
) -> AttentionOutput:
    """Attention with keys and values nearest-downsampled to ``spec``.

    Every query token is kept, so the output needs no unmerge step.
    """
    if k.height != v.height or k.width != v.width:
        raise ShapeError(f"k grid {k.height}x{k.width} and v grid {v.height}x{v.width} differ")
    k_small = nearest_downsample(k, spec)
    v_small = nearest_downsample(v, spec)
    return dense_attention(q, k_small, v_small, cfg, threads=threads, probe=probe)


def attention_workload_flops(n_q: int, n_kv: int, dim: int) -> int:
    """``4 * n_q * n_kv * dim``: multiply and add for both ``Q K^T`` and ``P V``."""
    for name, value in (("n_q", n_q), ("n_kv", n_kv), ("dim", dim)):
        if int(value) < 1:
            raise RangeError(f"{name} must be positive, got {value}")
    flops = 4 * int(n_q) * int(n_kv) * int(dim)
    if flops > INT64_MAX:
        raise OverflowError(f"flop count {flops} exceeds the 64-bit signed range")
    return flops
