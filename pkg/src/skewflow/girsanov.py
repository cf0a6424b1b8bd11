"""Girsanov density for fBm with H <= 1/2 and the exponential-moment probe.

With ``theta = K_H^{-1}(int_0^. u_r dr)`` the density is

    xi_T = exp(- int_0^T theta dW - 1/2 int_0^T theta^2 ds).

Since ``int_0^. u`` is absolutely continuous with derivative ``u``, ``theta``
is computed from ``u`` directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import rng
from .errors import GridMismatchError
from .fbm import PathBatch, PathKind, TimeGrid, as_hurst, sample_fbm_circulant, sample_wiener
from .frac_calc import SampledFunction
from .kernel_ops import _low_h, kh_inverse_array
from .stats import MCEstimate, combine, moments

EXP_LIMIT = 700.0


@dataclass(frozen=True)
class DriftSpec:
    """Drift ``b(t, y)`` acting on states of shape ``(..., d)``.

    ``jacobian`` returns ``Db`` with shape ``(..., d, d)`` and ``hessian``
    returns ``D^2 b`` with shape ``(..., d, d, d)`` (output index first).
    """

    evaluator: Callable[[float, np.ndarray], np.ndarray]
    description: str = ""
    has_time_derivative: bool = False
    jacobian: Callable[[float, np.ndarray], np.ndarray] | None = None
    hessian: Callable[[float, np.ndarray], np.ndarray] | None = None

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        return self.evaluator(t, y)


def _theta(h: float, u: np.ndarray, step: float) -> np.ndarray:
    if h == 0.5:
        return np.array(u, dtype=float)
    return kh_inverse_array(_low_h(h), u, step)


def _drift_values(u, w: PathBatch) -> np.ndarray:
    """Drift samples as ``(count or 1, dim, n + 1)``."""
    n1 = w.grid.n_steps + 1
    if isinstance(u, SampledFunction) or (isinstance(u, Sequence) and u and isinstance(u[0], SampledFunction)):
        parts = [u] if isinstance(u, SampledFunction) else list(u)
        if len(parts) != w.dim:
            raise GridMismatchError(f"{len(parts)} drift components for a {w.dim}-dimensional batch")
        for p in parts:
            if p.n != n1 or not math.isclose(p.a, 0.0) or not math.isclose(p.b, w.grid.t_end):
                raise GridMismatchError("drift samples do not match the Wiener grid")
        return np.stack([p.values for p in parts])[None, :, :]
    arr = np.asarray(u, dtype=float)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1:] != (n1, w.dim) or arr.shape[0] not in (1, w.count):
        raise GridMismatchError(f"drift array of shape {arr.shape} does not match the batch")
    return arr.transpose(0, 2, 1)


def girsanov_exponent(h, u, w: PathBatch) -> np.ndarray:
    """``log xi_T`` per path; see :func:`girsanov_weight`."""
    hp = as_hurst(h)
    if w.kind is not PathKind.WIENER:
        raise GridMismatchError("girsanov weights need the driving Wiener batch")
    dt = w.grid.dt
    vals = _drift_values(u, w)
    theta = _theta(hp.h, vals, dt)  # (c, d, n+1)
    dw = w.increments().transpose(0, 2, 1)  # (count, d, n)
    stoch = np.sum(theta[..., :-1] * dw, axis=(1, 2))
    sq = theta * theta
    quad = np.sum(0.5 * dt * (sq[..., 1:] + sq[..., :-1]), axis=(1, 2))
    expo = -stoch - 0.5 * quad
    if not np.all(np.isfinite(expo)):
        raise FloatingPointError("non-finite Girsanov exponent")
    return np.broadcast_to(expo, (w.count,)).copy()


def girsanov_weight(h, u, w: PathBatch) -> np.ndarray:
    """Per-path density ``xi_T``.

    ``u`` is either one :class:`SampledFunction` per component (deterministic
    drift) or an array of shape ``(n+1, d)`` / ``(count, n+1, d)`` of adapted
    drift values on the grid of ``w``.  The stochastic integral is a left-point
    sum against the increments of ``w``; the quadratic term uses the trapezoid rule.
    """
    expo = girsanov_exponent(h, u, w)
    if np.any(expo > EXP_LIMIT):
        raise FloatingPointError(f"Girsanov exponent exceeds {EXP_LIMIT}")
    return np.exp(expo)


def girsanov_mean(h, u, grid: TimeGrid, dim: int, count: int, seed: int,
                  chunk: int = 8192, workers: int | None = None) -> MCEstimate:
    """Monte Carlo estimate of ``E[xi_T]`` for a deterministic drift, in fixed chunks."""

    def run(lo: int, hi: int):
        w = sample_wiener(grid, dim, hi - lo, seed, start=lo, workers=1)
        return moments(girsanov_weight(h, u, w))

    return combine(rng.map_chunks(run, count, chunk=chunk, workers=workers))


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentProbe:
    eps: float
    k: float
    estimate: float
    stderr: float
    censored_fraction: float
    count: int


def _gauss_density(y: np.ndarray, x: np.ndarray, eps: float) -> np.ndarray:
    d = y.shape[-1]
    r2 = np.sum((y - x) ** 2, axis=-1)
    return np.exp(-r2 / (2.0 * eps)) / (2.0 * math.pi * eps) ** (d / 2.0)


def occupation_energy(h, paths: PathBatch, x, eps: float) -> np.ndarray:
    """``int_0^T (K_H^{-1}(int_0^. phi_{x,eps}(B_u) du)(t))^2 dt`` per path (trapezoid)."""
    hp = as_hurst(h)
    x = np.broadcast_to(np.asarray(x, dtype=float), (paths.dim,))
    phi = _gauss_density(paths.data, x, eps)  # (count, n+1)
    theta = _theta(hp.h, phi, paths.grid.dt)
    sq = theta * theta
    return np.sum(0.5 * paths.grid.dt * (sq[:, 1:] + sq[:, :-1]), axis=1)


def exp_moment_probe(h, d: int, k: float, eps: float, x, count: int, grid: TimeGrid,
                     seed: int = 0, chunk: int = 4096, workers: int | None = None) -> MomentProbe:
    """Estimate ``E[exp(k int_0^T theta_eps(t)^2 dt)]`` at one mollification width.

    Paths with ``k * energy`` above ``EXP_LIMIT`` are censored: they are
    left out of the sum (so the estimate is a lower bound) and their share is
    reported.  ``k = 0`` gives exactly 1.
    """
    hp = as_hurst(h)
    if k == 0:
        return MomentProbe(eps, k, 1.0, 0.0, 0.0, count)

    def run(lo: int, hi: int):
        b = sample_fbm_circulant(hp, grid, d, hi - lo, seed, start=lo, workers=1)
        return k * occupation_energy(hp, b, x, eps)

    expo = np.concatenate(rng.map_chunks(run, count, chunk=chunk, workers=workers))
    censored = expo > EXP_LIMIT
    vals = np.where(censored, 0.0, np.exp(np.minimum(expo, EXP_LIMIT)))
    with np.errstate(over="ignore"):  # near-cap values give an infinite stderr
        est = combine([moments(vals)])
    return MomentProbe(eps, k, est.value, est.stderr, float(censored.mean()), count)
