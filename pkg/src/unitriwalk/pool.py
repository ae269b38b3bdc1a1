"""Worker pool sized by the UNITRIWALK_THREADS environment variable."""

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count():
    raw = os.environ.get("UNITRIWALK_THREADS")
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


def thread_map(fn, items):
    """Ordered map; results do not depend on the worker count."""
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))
