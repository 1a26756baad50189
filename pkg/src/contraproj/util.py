"""Seeding, worker pools and JSON helpers shared by the experiment drivers."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np


def trial_rng(seed: int, *path: int) -> np.random.Generator:
    """Generator for one trial; depends only on (seed, path), never on scheduling."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))


def pmap(func: Callable, items: Sequence, jobs: int = 1) -> list:
    """Ordered map over items, optionally across worker processes."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    chunk = max(1, len(items) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(func, items, chunksize=chunk))


def clean(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (frozenset, set)):
        return sorted(clean(v) for v in obj)
    return obj


def dumps(obj, **kw) -> str:
    return json.dumps(clean(obj), sort_keys=True, **kw)


def signed_magnitudes(rng: np.random.Generator, size, low=0.5, high=1.5) -> np.ndarray:
    """Entries bounded away from zero: magnitude in [low, high], random sign."""
    mag = rng.uniform(low, high, size=size)
    return mag * rng.choice((-1.0, 1.0), size=size)


def split_counts(values: Iterable[bool]) -> int:
    return sum(1 for v in values if v)
