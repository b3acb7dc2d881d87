"""Thread-cap plumbing for the embarrassingly parallel stages.

Only pure-numpy work (episode generation, stitching, encoding) goes through
the pool: the autodiff tape flips a process-global no-grad flag, so anything
touching it stays serial.  Results are always collected in submission order,
which keeps every artifact byte-identical no matter the thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_VAR = "LAMWARD_THREADS"


def thread_cap() -> int:
    raw = os.environ.get(ENV_VAR, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def map_ordered(fn, items):
    """Like map(), but possibly threaded; order of results is guaranteed."""
    items = list(items)
    cap = thread_cap()
    if cap == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=cap) as pool:
        return list(pool.map(fn, items))
