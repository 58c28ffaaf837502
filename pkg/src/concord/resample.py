"""Deterministic chunked bootstrap resampling.

Replicates are produced in fixed-size chunks. Chunk ``c`` draws all of its
index matrices from an independent stream seeded with
``SeedSequence(entropy=seed, spawn_key=key + (c,))``, numpy's documented
stream-splitting mechanism. Because the chunk size is a constant and chunks
are combined in order, results depend only on ``(seed, reps)`` and never on
how many worker threads executed the chunks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

# Replicates per RNG chunk. Fixed: changing it would change resampling
# results for a given seed, so it is part of the determinism contract.
CHUNK_SIZE = 4096


def chunk_rng(seed: int, key: tuple[int, ...], chunk: int) -> np.random.Generator:
    """Independent generator for one chunk of replicates."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(key) + (chunk,))
    return np.random.default_rng(ss)


def bootstrap_statistics(
    stat_fn: Callable[[np.ndarray], np.ndarray],
    n_units: int,
    reps: int,
    seed: int,
    workers: int = 1,
    key: tuple[int, ...] = (),
) -> np.ndarray:
    """Return ``reps`` bootstrap statistics as a float array.

    ``stat_fn`` maps an integer index matrix of shape (r, n_units), one
    n-out-of-n resample per row, to a length-r vector of statistics.
    """
    if n_units < 1:
        raise ValueError("nothing to resample: n_units must be >= 1")
    if reps < 1:
        raise ValueError("replications must be >= 1")
    n_chunks = -(-reps // CHUNK_SIZE)

    def run(chunk: int) -> np.ndarray:
        rng = chunk_rng(seed, key, chunk)
        rows = min(CHUNK_SIZE, reps - chunk * CHUNK_SIZE)
        idx = rng.integers(0, n_units, size=(rows, n_units))
        return np.asarray(stat_fn(idx), dtype=float)

    if workers <= 1:
        parts = [run(c) for c in range(n_chunks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(n_chunks)))
    return np.concatenate(parts)


def resampled_means(
    values: Sequence[float],
    reps: int,
    seed: int,
    workers: int = 1,
    key: tuple[int, ...] = (),
) -> np.ndarray:
    """Bootstrap distribution of the mean of ``values``."""
    vals = np.asarray(values, dtype=float)
    return bootstrap_statistics(
        lambda idx: vals[idx].mean(axis=1), vals.size, reps, seed, workers, key
    )


def resampled_ratios(
    numerators: Sequence[float],
    denominators: Sequence[float],
    reps: int,
    seed: int,
    workers: int = 1,
    key: tuple[int, ...] = (),
) -> np.ndarray:
    """Bootstrap distribution of sum(num)/sum(den) over resampled units.

    Used for cluster (patient-level) resampling where each unit carries a
    count of matches and a count of cases.
    """
    num = np.asarray(numerators, dtype=float)
    den = np.asarray(denominators, dtype=float)
    if num.shape != den.shape:
        raise ValueError("numerators and denominators must align")

    def stat(idx: np.ndarray) -> np.ndarray:
        return num[idx].sum(axis=1) / den[idx].sum(axis=1)

    return bootstrap_statistics(stat, num.size, reps, seed, workers, key)


def percentile_interval(stats: np.ndarray, level: float = 0.95) -> tuple[float, float]:
    """Equal-tailed percentile interval of a bootstrap distribution."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    tail = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(stats, [tail, 100.0 - tail])
    return float(lo), float(hi)
