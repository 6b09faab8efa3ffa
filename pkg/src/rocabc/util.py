"""Small shared helpers."""

from __future__ import annotations

import os


def worker_count(requested: int | None = None) -> int:
    """Worker cap: explicit argument, else ROC_ABC_THREADS, else CPU count."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("ROC_ABC_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)
