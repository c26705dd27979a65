"""Deterministic replica-chunk parallelism.

Work is split into fixed-size chunks of replica indices (chunk boundaries
depend only on the replica count, never on the worker count), each chunk is
processed by a top-level picklable function, and results are concatenated in
chunk order.  Together with per-replica counter-based streams this makes
output bytes independent of the worker count.  FKPP_QSD_MAX_WORKERS caps the
pool size.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

CHUNK = 256


def effective_workers(requested: int) -> int:
    cap = os.environ.get("FKPP_QSD_MAX_WORKERS")
    w = max(1, int(requested))
    if cap:
        w = min(w, max(1, int(cap)))
    return w


def chunk_ranges(n: int, chunk: int = CHUNK):
    return [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]


def chunked_map(fn, n: int, payload: dict, workers: int = 1, chunk: int = CHUNK):
    """fn(lo, hi, payload) -> result, applied over fixed chunks of range(n);
    returns the list of chunk results in chunk order."""
    ranges = chunk_ranges(n, chunk)
    workers = effective_workers(workers)
    if workers == 1 or len(ranges) == 1:
        return [fn(lo, hi, payload) for lo, hi in ranges]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, lo, hi, payload) for lo, hi in ranges]
        return [f.result() for f in futures]
