"""Replicate-level parallelism.

Kernels are numba functions compiled with ``nogil=True`` that fill rows
``start:stop`` of caller-owned output arrays.  Work is split into fixed-size
chunks whose boundaries do not depend on the thread count, and every replicate
draws from its own seeded stream, so outputs are identical for any number of
threads.
"""
from __future__ import annotations

import os
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "STIRLAB_THREADS"


def default_threads() -> int:
    env = os.environ.get(ENV_THREADS)
    if env:
        n = int(env)
        if n < 1:
            raise ValueError(f"{ENV_THREADS} must be >= 1, got {env!r}")
        return n
    return os.cpu_count() or 1


def run_chunked(fill: Callable[[int, int], None], reps: int, threads: int | None = None,
                chunk: int = 256) -> None:
    """Call ``fill(start, stop)`` over ``range(reps)`` in chunks."""
    bounds = [(a, min(a + chunk, reps)) for a in range(0, reps, chunk)]
    threads = threads or default_threads()
    if threads == 1 or len(bounds) == 1:
        for a, b in bounds:
            fill(a, b)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for fut in [pool.submit(fill, a, b) for a, b in bounds]:
            fut.result()
