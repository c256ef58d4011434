"""Seeding and replica-level parallelism.

Every replica draws from its own generator keyed by ``(seed, index,
stream)``, so results do not depend on how replicas are scheduled.
"""

from __future__ import annotations

import os
import secrets
from concurrent.futures import ThreadPoolExecutor

import numpy as np

SEED_BITS = 63

# stream ids keep independent uses of one (seed, index) pair apart
STREAM_LOG = 0
STREAM_INIT = 1
STREAM_CP_LOG = 2
STREAM_THIN = 3
STREAM_POINTPROC = 4


def fresh_seed() -> int:
    return secrets.randbits(SEED_BITS)


def check_seed(seed) -> int:
    if isinstance(seed, bool) or int(seed) != seed or not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    return int(seed)


def replica_rng(seed: int, index: int = 0, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([check_seed(seed), int(index), int(stream)]))


def default_threads() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def run_indexed(fn, n: int, threads: int | None = None) -> list:
    """Evaluate ``fn(i)`` for ``i in range(n)``; results come back in index order."""
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))
