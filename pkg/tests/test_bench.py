import csv
import io

import numpy as np
import pytest

from todo_attn.attention import AttentionConfig
from todo_attn.bench import (
    CSV_HEADER,
    BenchRecord,
    estimate_attention_memory,
    make_workload,
    preset_configs,
    records_to_csv,
    run_bench,
)
from todo_attn.errors import RangeError


def test_memory_fp16_figure():
    est = estimate_attention_memory(1, 8, 256**2, 256**2, 2)
    assert est.total_bytes == 68_719_476_736
    assert round(est.gigabytes, 1) == 68.7
    assert est.gibibytes == 64.0
    assert est.render() == "68719476736 bytes (68.72 GB, 64.00 GiB)"


def test_memory_unit_and_quarter():
    assert estimate_attention_memory(1, 1, 1, 1, 1).total_bytes == 1
    dense = estimate_attention_memory(1, 8, 256**2, 256**2, 2).total_bytes
    todo = estimate_attention_memory(1, 8, 256**2, 128**2, 2).total_bytes
    assert todo * 4 == dense


def test_memory_large_values_do_not_wrap():
    est = estimate_attention_memory(2**20, 2**10, 2**20, 2**20, 8)
    assert est.total_bytes == 2**73


def test_memory_rejects_non_positive():
    with pytest.raises(RangeError):
        estimate_attention_memory(1, 0, 1, 1, 1)


def test_workload_is_deterministic():
    a = make_workload(8, 8, 16, 3)
    b = make_workload(8, 8, 16, 3)
    c = make_workload(8, 8, 16, 4)
    assert all(x.equals(y) for x, y in zip(a, b))
    assert not a[0].equals(c[0])


def test_preset_configs_count():
    configs = preset_configs()
    assert len(configs) == 15
    assert [c for c in configs if c[0] == "dense"] == [
        ("dense", 128, 128, 0.0), ("dense", 192, 192, 0.0), ("dense", 256, 256, 0.0)]
    assert {c[3] for c in configs if c[0] != "dense"} == {0.75, 0.89}


def test_csv_format():
    rec = BenchRecord("todo", 4, 5, 8, 0.75, 1234, 3, 1.5e6, 2.0)
    text = records_to_csv([rec])
    assert text.splitlines()[0] == CSV_HEADER
    assert text.endswith("\n") and "\r" not in text
    row = next(csv.DictReader(io.StringIO(text)))
    assert row["method"] == "todo" and row["wall_nanos_median"] == "1234"
    assert float(row["speedup_vs_dense"]) == 2.0


def test_dense_record_has_unit_speedup():
    rec = run_bench("dense", 16, 16, 32, AttentionConfig(4, 8), 0.0, repeats=2, warmup=0)
    assert rec.speedup_vs_dense == 1.0 and rec.merge_ratio == 0.0
    assert rec.wall_nanos > 0
    assert rec.throughput == pytest.approx(256 / (rec.wall_nanos * 1e-9))


def test_dense_self_comparison_within_noise_band():
    cfg = AttentionConfig(4, 16)
    a = run_bench("dense", 64, 64, 64, cfg, 0.0, repeats=9, warmup=2)
    b = run_bench("dense", 64, 64, 64, cfg, 0.0, repeats=9, warmup=2)
    assert 0.8 <= a.wall_nanos / b.wall_nanos <= 1.25


def test_speedup_uses_baseline():
    cfg = AttentionConfig(2, 16)
    base = run_bench("dense", 32, 32, 32, cfg, repeats=2, warmup=0)
    rec = run_bench("todo", 32, 32, 32, cfg, 0.75, repeats=2, warmup=0, baseline=base)
    assert rec.speedup_vs_dense == pytest.approx(base.wall_nanos / rec.wall_nanos)
    with pytest.raises(RangeError):
        run_bench("todo", 16, 16, 32, cfg, 0.75, repeats=1, warmup=0, baseline=base)


@pytest.mark.parametrize("kwargs", [dict(repeats=0), dict(ratio=1.0), dict(warmup=-1)])
def test_bad_arguments(kwargs):
    args = dict(repeats=1, warmup=0, ratio=0.5)
    args.update(kwargs)
    with pytest.raises(RangeError):
        run_bench("todo", 8, 8, 8, AttentionConfig(1, 8), **args)


def test_unknown_method():
    with pytest.raises(RangeError):
        run_bench("flash", 8, 8, 8, AttentionConfig(1, 8), 0.5, repeats=1, warmup=0)


def test_todo_speedup_below_flop_bound():
    cfg = AttentionConfig(4, 16)
    base = run_bench("dense", 64, 64, 64, cfg, repeats=5, warmup=1)
    for ratio in (0.75, 0.8889):
        rec = run_bench("todo", 64, 64, 64, cfg, ratio, repeats=5, warmup=1, baseline=base)
        assert rec.speedup_vs_dense <= 1.25 / (1 - ratio)


def test_parallel_bench_runs():
    rec = run_bench("todo", 32, 32, 32, AttentionConfig(4, 8), 0.75, repeats=2, warmup=0, threads=2)
    assert rec.speedup_vs_dense > 0
    assert np.isfinite(rec.throughput)
