"""Deterministic replicate scheduling.

Replicates are partitioned into fixed-size blocks of consecutive sample_ids;
blocks may be farmed out to worker processes, but partial results are always
merged in block order, so every estimate is identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from multiprocessing import get_context

BLOCK_SIZE = 256


def block_ranges(n: int, id_base: int = 0) -> list[tuple[int, int]]:
    """Sample-id blocks [lo, hi) covering id_base .. id_base + n."""
    return [
        (id_base + lo, id_base + min(lo + BLOCK_SIZE, n)) for lo in range(0, n, BLOCK_SIZE)
    ]


def run_blocks(fn, n: int, args: tuple = (), workers: int = 1, id_base: int = 0) -> list:
    """Apply fn(lo, hi, *args) to every block and return results in block order.

    fn must be a module-level callable with picklable args when workers > 1.
    """
    blocks = block_ranges(n, id_base)
    if workers <= 1 or len(blocks) == 1:
        return [fn(lo, hi, *args) for lo, hi in blocks]
    ctx = get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        futures = [pool.submit(fn, lo, hi, *args) for lo, hi in blocks]
        return [f.result() for f in futures]


def merge_all(parts: list):
    """Fold a block-ordered list of accumulators with their merge method."""
    acc = parts[0]
    for other in parts[1:]:
        acc = acc.merge(other)
    return acc
