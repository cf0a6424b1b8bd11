"""Counter-based random streams for reproducible parallel Monte Carlo.

Every path owns an independent Philox stream addressed by ``(seed, stream,
path index)``.  Draws for path ``i`` never depend on how many paths are
generated alongside it or on how the work is split across threads, so a
batch is bit-identical for any worker count or chunking.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

WORKERS_ENV = "SKEWFLOW_WORKERS"

# stream tags; distinct tags give non-overlapping key spaces
FBM = 1
WIENER = 2
SIMPLEX = 3
AUX = 4

_MASK64 = (1 << 64) - 1
_TWO_M53 = 2.0**-53

T = TypeVar("T")


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def _bit_generator(seed: int, stream: int, path: int) -> Philox:
    if path < 0:
        raise ValueError("path index must be non-negative")
    key = (int(seed) & _MASK64) | ((int(stream) & _MASK64) << 64)
    # path index in the top counter word: each path may draw 2**192 blocks
    return Philox(counter=int(path) << 192, key=key)


def path_uniforms(seed: int, stream: int, path: int, size: int) -> np.ndarray:
    """Uniforms in the open interval (0, 1) for one path."""
    raw = _bit_generator(seed, stream, path).random_raw(size)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def path_normals(seed: int, stream: int, path: int, size: int) -> np.ndarray:
    """Standard normals for one path, by inverse CDF."""
    return ndtri(path_uniforms(seed, stream, path, size))


def map_chunks(
    fn: Callable[[int, int], T], count: int, chunk: int = 2048, workers: int | None = None
) -> list[T]:
    """Apply ``fn(lo, hi)`` over ``[0, count)`` in chunks; results in index order."""
    workers = default_workers() if workers is None else max(1, int(workers))
    bounds = [(lo, min(lo + chunk, count)) for lo in range(0, count, chunk)]
    if workers == 1 or len(bounds) <= 1:
        return [fn(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))


def _block(draw, seed, stream, start, count, size, workers):
    out = np.empty((count, size))

    def fill(lo: int, hi: int) -> None:
        for i in range(lo, hi):
            out[i] = draw(seed, stream, start + i, size)

    map_chunks(fill, count, chunk=512, workers=workers)
    return out


def normal_block(
    seed: int, stream: int, start: int, count: int, size: int, workers: int | None = None
) -> np.ndarray:
    """``(count, size)`` standard normals for paths ``start .. start+count-1``."""
    return _block(path_normals, seed, stream, start, count, size, workers)


def uniform_block(
    seed: int, stream: int, start: int, count: int, size: int, workers: int | None = None
) -> np.ndarray:
    return _block(path_uniforms, seed, stream, start, count, size, workers)
