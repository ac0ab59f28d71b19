"""Attention throughput benchmarks and the attention-map memory estimator."""
from __future__ import annotations

import csv
import io
import statistics
import time
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from threadpoolctl import threadpool_limits

from .attention import AttentionConfig, dense_attention, todo_attention
from .errors import RangeError
from .grid import TokenGrid, check_ratio, ratio_to_spec
from .tome import merge_count, tome_attention

METHODS = ("dense", "todo", "tome")
CSV_HEADER = (
    "method,height,width,dim,ratio,repeats,wall_nanos_median,"
    "throughput_tokens_per_s,speedup_vs_dense"
)

# latent grids for 1024, 1536 and 2048 pixel images (8x VAE downscale)
PRESET_SHAPES = ((128, 128), (192, 192), (256, 256))
PRESET_RATIOS = (0.75, 0.89)
PRESET_DIM = 320
PRESET_HEADS = 8


@dataclass(frozen=True)
class MemoryEstimate:
    batch: int
    heads: int
    n_q: int
    n_kv: int
    bytes_per_element: int
    total_bytes: int

    @property
    def gigabytes(self) -> float:
        return self.total_bytes / 10**9

    @property
    def gibibytes(self) -> float:
        return self.total_bytes / 2**30

    def render(self) -> str:
        return f"{self.total_bytes} bytes ({self.gigabytes:.2f} GB, {self.gibibytes:.2f} GiB)"


def estimate_attention_memory(
    batch: int, heads: int, n_q: int, n_kv: int, bytes_per_element: int
) -> MemoryEstimate:
    """Bytes needed to hold the full ``batch x heads x n_q x n_kv`` attention map."""
    values = dict(batch=batch, heads=heads, n_q=n_q, n_kv=n_kv, bytes_per_element=bytes_per_element)
    for name, value in values.items():
        if int(value) != value or value < 1:
            raise RangeError(f"{name} must be a positive integer, got {value}")
    ints = {name: int(value) for name, value in values.items()}
    total = ints["batch"] * ints["heads"] * ints["n_q"] * ints["n_kv"] * ints["bytes_per_element"]
    return MemoryEstimate(total_bytes=total, **ints)


@dataclass(frozen=True)
class BenchRecord:
    method: str
    height: int
    width: int
    dim: int
    merge_ratio: float
    wall_nanos: int
    repeats: int
    throughput: float
    speedup_vs_dense: float

    def csv_row(self) -> list:
        return [
            self.method,
            self.height,
            self.width,
            self.dim,
            f"{self.merge_ratio:g}",
            self.repeats,
            self.wall_nanos,
            f"{self.throughput:.6g}",
            f"{self.speedup_vs_dense:.6g}",
        ]


def records_to_csv(records: Iterable[BenchRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER.split(","))
    for rec in records:
        writer.writerow(rec.csv_row())
    return buf.getvalue()


def make_workload(height: int, width: int, dim: int, seed: int):
    """Seeded standard-normal Q, K, V grids."""
    rng = np.random.default_rng(seed)
    return tuple(
        TokenGrid(rng.standard_normal((height, width, dim), dtype=np.float32)) for _ in range(3)
    )


def _runner(method, q, k, v, cfg, ratio, seed, threads):
    if method == "dense":
        return lambda: dense_attention(q, k, v, cfg, threads=threads)
    if method == "todo":
        spec = ratio_to_spec(ratio, k.height, k.width)
        return lambda: todo_attention(q, k, v, spec, cfg, threads=threads)
    if method == "tome":
        r = merge_count(ratio, q.height, q.width)
        return lambda: tome_attention(q, r, seed, cfg, threads=threads)
    raise RangeError(f"unknown method {method!r}, expected one of {METHODS}")


def time_callable(fn, repeats: int, warmup: int) -> int:
    """Median wall time of ``fn`` in nanoseconds over ``repeats`` timed calls."""
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - t0)
    return max(1, int(statistics.median(samples)))


def run_bench(
    method: str,
    height: int,
    width: int,
    dim: int,
    cfg: Optional[AttentionConfig] = None,
    ratio: float = 0.0,
    repeats: int = 20,
    warmup: int = 3,
    seed: int = 0,
    *,
    threads: int = 1,
    baseline: Optional[BenchRecord] = None,
) -> BenchRecord:
    """Time one attention path on a seeded self-attention workload.

    ``speedup_vs_dense`` is measured against ``baseline`` when given (it must
    be a dense record of the same shape), otherwise a dense run of the same
    shape is timed in this call. BLAS threads are limited to ``threads``
    while timing.
    """
    if repeats < 1 or warmup < 0:
        raise RangeError(f"repeats must be >= 1 and warmup >= 0, got {repeats}, {warmup}")
    ratio = check_ratio(ratio)
    if cfg is None:
        cfg = AttentionConfig.for_dim(dim, PRESET_HEADS if dim % PRESET_HEADS == 0 else 1)
    if baseline is not None and (
        baseline.method != "dense" or (baseline.height, baseline.width, baseline.dim) != (height, width, dim)
    ):
        raise RangeError("baseline must be a dense record of the same shape")
    q, k, v = make_workload(height, width, dim, seed)
    fn = _runner(method, q, k, v, cfg, ratio, seed, threads)

    with threadpool_limits(limits=threads):
        nanos = time_callable(fn, repeats, warmup)
        if method == "dense":
            dense_nanos = nanos
        elif baseline is not None:
            dense_nanos = baseline.wall_nanos
        else:
            dense_fn = _runner("dense", q, k, v, cfg, 0.0, seed, threads)
            dense_nanos = time_callable(dense_fn, repeats, warmup)

    return BenchRecord(
        method=method,
        height=height,
        width=width,
        dim=dim,
        merge_ratio=0.0 if method == "dense" else ratio,
        wall_nanos=nanos,
        repeats=repeats,
        throughput=height * width / (nanos * 1e-9),
        speedup_vs_dense=1.0 if method == "dense" else dense_nanos / nanos,
    )


def preset_configs(shrink: int = 1) -> list[tuple[str, int, int, float]]:
    """``(method, height, width, ratio)`` for the preset suite; dense once per shape.

    ``shrink`` divides each grid side, for quick smoke runs.
    """
    if shrink < 1:
        raise RangeError(f"shrink must be >= 1, got {shrink}")
    configs = []
    for h, w in PRESET_SHAPES:
        h, w = max(2, h // shrink), max(2, w // shrink)
        configs.append(("dense", h, w, 0.0))
        for method in ("todo", "tome"):
            for ratio in PRESET_RATIOS:
                configs.append((method, h, w, ratio))
    return configs


def paper_preset_suite(
    repeats: int = 20, warmup: int = 3, seed: int = 0, *, shrink: int = 1, threads: int = 1
) -> list[BenchRecord]:
    """Dense, ToDo and ToMe at the three preset grids and two merge ratios."""
    cfg = AttentionConfig.for_dim(PRESET_DIM, PRESET_HEADS)
    records = []
    dense: Optional[BenchRecord] = None
    for method, h, w, ratio in preset_configs(shrink):
        rec = run_bench(
            method, h, w, PRESET_DIM, cfg, ratio, repeats, warmup, seed,
            threads=threads, baseline=None if method == "dense" else dense,
        )
        if method == "dense":
            dense = rec
        records.append(rec)
    return records
