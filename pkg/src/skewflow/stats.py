"""Monte Carlo summaries with a fixed reduction order."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MCEstimate:
    value: float
    stderr: float
    count: int

    def z_score(self, target: float) -> float:
        if self.stderr == 0.0:
            return 0.0 if self.value == target else math.inf
        return (self.value - target) / self.stderr

    def within(self, target: float, n_se: float = 3.0) -> bool:
        return abs(self.z_score(target)) <= n_se


def mc_mean(samples, axis: int = 0) -> MCEstimate | tuple[np.ndarray, np.ndarray]:
    """Sample mean and standard error.

    ``np.sum`` reduces pairwise in a fixed order, so the result does not depend
    on how the samples were produced.
    """
    x = np.asarray(samples, dtype=float)
    n = x.shape[axis]
    mean = np.sum(x, axis=axis) / n
    if n > 1:
        var = np.sum((x - np.expand_dims(mean, axis)) ** 2, axis=axis) / (n - 1)
    else:
        var = np.zeros_like(mean)
    se = np.sqrt(var / n)
    if np.ndim(mean) == 0:
        return MCEstimate(float(mean), float(se), n)
    return mean, se


def moments(x) -> tuple[int, float, float]:
    """``(count, mean, sum of squared deviations)`` of a chunk."""
    x = np.asarray(x, dtype=float).ravel()
    mean = float(np.sum(x) / x.size)
    return x.size, mean, float(np.sum((x - mean) ** 2))


def combine(parts: list[tuple[int, float, float]]) -> MCEstimate:
    """Merge chunk moments in list order (Chan et al. pairwise update)."""
    n, mean, m2 = 0, 0.0, 0.0
    for nb, mb, m2b in parts:
        if nb == 0:
            continue
        tot = n + nb
        delta = mb - mean
        mean += delta * nb / tot
        m2 += m2b + delta * delta * n * nb / tot
        n = tot
    var = m2 / (n - 1) if n > 1 else 0.0
    return MCEstimate(mean, math.sqrt(var / n), n)
