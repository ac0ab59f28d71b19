"""Instrumentation counters for the cost-model checks.

Kernels bump named counters as they work (similarity pairs evaluated, tokens
touched by downsampling, zero-vector cosines). Tests read them through
:func:`counting`.
"""
import threading
from collections import Counter
from contextlib import contextmanager

_lock = threading.Lock()
_counts: Counter = Counter()


def bump(name: str, amount: int = 1) -> None:
    with _lock:
        _counts[name] += amount


def snapshot() -> dict:
    with _lock:
        return dict(_counts)


def get(name: str) -> int:
    with _lock:
        return _counts[name]


@contextmanager
def counting():
    """Yield a dict that holds the counter deltas accumulated inside the block."""
    before = snapshot()
    delta: dict = {}
    try:
        yield delta
    finally:
        after = snapshot()
        for key, value in after.items():
            diff = value - before.get(key, 0)
            if diff:
                delta[key] = diff
