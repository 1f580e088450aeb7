"""Thread-cap handling for the embarrassingly parallel loops.

TAMPERWOOD_THREADS caps worker threads; 0 or unset means auto. Results are
always collected in submission order, so parallel runs are bit-identical
to sequential ones.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count() -> int:
    raw = os.environ.get("TAMPERWOOD_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        return os.cpu_count() or 1
    return n


def map_ordered(fn, items) -> list:
    items = list(items)
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))
