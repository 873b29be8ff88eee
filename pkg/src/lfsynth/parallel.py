"""Worker pool shared by training and evaluation.

Results always come back in submission order and callers reduce them in
that order, so outputs do not depend on the number of workers. In
deterministic mode BLAS is pinned to one thread as well, which fixes the
summation order inside matrix products.
"""
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import ExitStack

from threadpoolctl import threadpool_limits

THREADS_ENV = "LFSYNTH_THREADS"


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


class Workers:
    def __init__(self, threads: int = 1, deterministic: bool = True):
        self.threads = max(1, int(threads))
        self.deterministic = deterministic
        self._stack = None
        self._pool = None

    def __enter__(self):
        self._stack = ExitStack()
        if self.deterministic:
            self._stack.enter_context(threadpool_limits(limits=1, user_api="blas"))
        if self.threads > 1:
            self._pool = self._stack.enter_context(ThreadPoolExecutor(self.threads))
        return self

    def __exit__(self, *exc):
        self._stack.close()
        self._pool = None
        return False

    def map(self, fn, items) -> list:
        if self._pool is None:
            return [fn(item) for item in items]
        return list(self._pool.map(fn, items))


SERIAL = Workers(1, deterministic=False)
