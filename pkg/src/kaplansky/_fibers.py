"""Chunked per-atom evaluation.

Every fiber computation in the package is a pure function of one atom's
data, so batches of atoms can be farmed out to worker threads and
re-assembled in atom order.
"""
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ._config import resolve


def _workers(parallelism):
    parallelism = resolve("parallelism", parallelism)
    if parallelism == 0:
        return os.cpu_count() or 1
    return parallelism


def fiber_map(func, *stacks, parallelism=None):
    """Apply a batched ``func`` over the leading (atom) axis of ``stacks``.

    ``func`` receives slices of every stack and must return a tuple of
    arrays whose leading axis is the slice length. Results are
    concatenated in atom order, so the output does not depend on the
    number of workers.
    """
    n_atoms = stacks[0].shape[0]
    workers = min(_workers(parallelism), max(n_atoms, 1))
    if workers <= 1 or n_atoms < 2:
        return func(*stacks)
    bounds = np.linspace(0, n_atoms, workers + 1).astype(int)
    chunks = [slice(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(lambda sl: func(*(s[sl] for s in stacks)), chunks))
    return tuple(np.concatenate(pieces, axis=0) for pieces in zip(*parts))
