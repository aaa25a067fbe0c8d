"""Deterministic parallel map over replication indices.

Work is split into contiguous chunks; results come back in index order,
so any downstream reduction is independent of the thread count.  The
numba cores release the GIL, which is where the time goes.
"""
from concurrent.futures import ThreadPoolExecutor

DEFAULT_CHUNK = 256


def parallel_map(fn, n, threads=1, chunk=DEFAULT_CHUNK):
    n = int(n)
    if threads is None or threads <= 1 or n <= chunk:
        return [fn(i) for i in range(n)]

    def run(lo):
        return [fn(i) for i in range(lo, min(lo + chunk, n))]

    out = []
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for part in pool.map(run, range(0, n, chunk)):
            out.extend(part)
    return out
