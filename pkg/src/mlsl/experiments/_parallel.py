"""Tiny order-preserving thread pool wrapper.

The heavy kernels release the GIL inside FFT and BLAS calls, so a thread
pool is enough; results always come back in submission order to keep runs
deterministic regardless of scheduling.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


class OrderedPool:
    def __init__(self, threads: int = 1):
        self.threads = max(1, int(threads))

    def map_ordered(self, fn, items):
        items = list(items)
        if self.threads <= 1 or len(items) <= 1:
            return [fn(it) for it in items]
        with ThreadPoolExecutor(max_workers=self.threads) as ex:
            return list(ex.map(fn, items))
