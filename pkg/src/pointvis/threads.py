"""Worker-count control for the parallel reduction paths.

The env var POINTVIS_THREADS (alias CENPBG_THREADS) caps the number of
chunks a candidate array is split into. Results are required to be
bit-identical to sequential execution, so this only affects speed.
"""
from __future__ import annotations

import os


def worker_count() -> int:
    for var in ("CENPBG_THREADS", "POINTVIS_THREADS"):
        raw = os.environ.get(var)
        if raw:
            try:
                n = int(raw)
            except ValueError:
                continue
            if n >= 1:
                return n
    return 1
