"""Mollified skew-fBm equation and local-time estimation.

The local-time drift ``alpha * L_t(X) * 1_d`` is replaced by
``alpha * phi_eps(X_t) * 1_d dt`` with ``phi_eps`` the centred Gaussian density
of covariance ``eps * I``, ``eps = 1 / n``, and the resulting SDE is solved by
explicit Euler on the fBm increments.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import rng
from .errors import DomainError, NonFiniteStateError
from .fbm import PathBatch, PathKind, TimeGrid, as_hurst, sample_fbm
from .girsanov import DriftSpec
from .stats import MCEstimate, combine, moments

DEFAULT_EPS_SCHEDULE = tuple(2.0**-j for j in range(2, 8))
STABILIZATION_TOL = 0.05
COUPLING_FACTOR = 4.0


class CouplingWarning(UserWarning):
    """The mollifier is too narrow for the time step to resolve the drift."""


def mollifier(y, eps: float, d: int | None = None) -> np.ndarray | float:
    """Gaussian density ``(2 pi eps)^(-d/2) exp(-|y|^2 / (2 eps))``.

    ``y`` has shape ``(..., d)``; a scalar or 1-d array with ``d = 1`` is
    treated as a batch of one-dimensional points.
    """
    if not eps > 0:
        raise DomainError(f"mollifier width must be positive, got {eps}")
    y = np.asarray(y, dtype=float)
    if d is None:
        d = 1 if y.ndim == 0 else y.shape[-1]
    if d == 1 and (y.ndim == 0 or y.shape[-1] != 1):
        r2 = y * y
    else:
        if y.shape[-1] != d:
            raise ValueError(f"last axis of y has length {y.shape[-1]}, expected {d}")
        r2 = np.sum(y * y, axis=-1)
    out = np.exp(-r2 / (2.0 * eps)) / (2.0 * math.pi * eps) ** (d / 2.0)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# drift factories


def zero_drift(d: int) -> DriftSpec:
    return DriftSpec(
        lambda t, y: np.zeros_like(y),
        "zero",
        jacobian=lambda t, y: np.zeros(y.shape + (d,)),
        hessian=lambda t, y: np.zeros(y.shape + (d, d)),
    )


def linear_drift(matrix) -> DriftSpec:
    """``b(y) = A y``; a scalar ``A`` means ``A * I``."""
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    d = a.shape[0]
    if a.shape == (1, 1):
        def ev(t, y):
            return a[0, 0] * y

        def jac(t, y):
            return np.broadcast_to(a[0, 0] * np.eye(y.shape[-1]), y.shape + (y.shape[-1],)).copy()
    else:
        def ev(t, y):
            return y @ a.T

        def jac(t, y):
            return np.broadcast_to(a, y.shape[:-1] + (d, d)).copy()
    return DriftSpec(ev, f"linear {a.tolist()}", jacobian=jac,
                     hessian=lambda t, y: np.zeros(y.shape + (y.shape[-1], y.shape[-1])))


def gaussian_drift(alpha: float, eps: float, d: int, center=None) -> DriftSpec:
    """``b(y) = alpha * phi_eps(y - c) * 1_d`` with analytic first and second derivatives."""
    c = np.zeros(d) if center is None else np.broadcast_to(np.asarray(center, dtype=float), (d,))
    ones = np.ones(d)

    def ev(t, y):
        return alpha * mollifier(y - c, eps, d)[..., None] * ones

    def jac(t, y):
        z = y - c
        grad = -z / eps * mollifier(z, eps, d)[..., None]
        return alpha * ones[:, None] * grad[..., None, :]

    def hess(t, y):
        z = y - c
        phi = mollifier(z, eps, d)[..., None, None]
        second = (z[..., :, None] * z[..., None, :] / eps**2 - np.eye(d) / eps) * phi
        return alpha * ones[:, None, None] * second[..., None, :, :]

    return DriftSpec(ev, f"{alpha} * gaussian(eps={eps}, d={d})", jacobian=jac, hessian=hess)


# ---------------------------------------------------------------------------


def _initial_state(x0, count: int, dim: int) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 0:
        x0 = np.full(dim, float(x0))
    return np.broadcast_to(x0, (count, dim)).astype(float)


def euler_solve(b: DriftSpec, x0, noise: PathBatch) -> PathBatch:
    """Explicit Euler ``X_{i+1} = X_i + b(t_i, X_i) dt + (B_{i+1} - B_i)``."""
    if noise.kind is PathKind.SOLUTION:
        raise ValueError("euler_solve needs a noise batch")
    grid = noise.grid
    dt = grid.dt
    inc = noise.increments()
    out = np.empty_like(noise.data)
    x = _initial_state(x0, noise.count, noise.dim)
    out[:, 0] = x
    t = grid.nodes
    for i in range(grid.n_steps):
        x = x + b(t[i], x) * dt + inc[:, i]
        if not np.all(np.isfinite(x)):
            raise NonFiniteStateError(i + 1)
        out[:, i + 1] = x
    return PathBatch(noise.dim, grid, noise.seed, out, PathKind.SOLUTION, f"euler/{noise.method}",
                     noise.h, noise.start)


@dataclass(frozen=True)
class SkewConfig:
    alpha: float
    x0: tuple
    h: float
    grid: TimeGrid
    n_moll: int
    dim: int = 1
    method: str = "circulant"

    def __post_init__(self):
        as_hurst(self.h)
        if int(self.n_moll) != self.n_moll or self.n_moll < 1:
            raise DomainError(f"n_moll must be a positive integer, got {self.n_moll}")
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if x0.size == 1 and self.dim > 1:
            x0 = np.full(self.dim, x0[0])
        if x0.size != self.dim:
            raise ValueError(f"x0 has {x0.size} entries for dim={self.dim}")
        object.__setattr__(self, "x0", tuple(float(v) for v in x0))

    @property
    def eps(self) -> float:
        return 1.0 / self.n_moll

    @property
    def existence_regime(self) -> bool:
        return Fraction(self.h) < Fraction(1, 2 * (self.dim + 2))

    def drift(self) -> DriftSpec:
        return gaussian_drift(self.alpha, self.eps, self.dim)

    def with_n(self, n_moll: int) -> "SkewConfig":
        return SkewConfig(self.alpha, self.x0, self.h, self.grid, n_moll, self.dim, self.method)


def coupling_ok(eps: float, noise: PathBatch, factor: float = COUPLING_FACTOR) -> bool:
    """``sqrt(eps) >= factor * RMS step displacement`` of the noise."""
    rms = float(np.sqrt(np.mean(noise.increments() ** 2)))
    return math.sqrt(eps) >= factor * rms


def check_coupling(eps: float, noise: PathBatch) -> bool:
    ok = coupling_ok(eps, noise)
    if not ok:
        warnings.warn(
            f"mollifier width eps={eps:g} is not resolved by the time step "
            f"(need sqrt(eps) >= {COUPLING_FACTOR} x RMS step)",
            CouplingWarning,
            stacklevel=2,
        )
    return ok


def solve_skew_mollified(cfg: SkewConfig, noise: PathBatch) -> PathBatch:
    if noise.dim != cfg.dim or noise.grid != cfg.grid:
        raise ValueError("noise batch does not match the configuration")
    return euler_solve(cfg.drift(), np.array(cfg.x0), noise)


# ---------------------------------------------------------------------------
# local time


@dataclass(frozen=True)
class LocalTimeEstimate:
    """``values[e, p, i] = int_0^{t_i} phi_eps_e(X_s - level) ds`` (cumulative trapezoid)."""

    eps: tuple
    level: tuple
    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def at(self, index: int = -1) -> np.ndarray:
        return self.values[:, :, index]

    def between(self, i0: int, i1: int) -> np.ndarray:
        return self.values[:, :, i1] - self.values[:, :, i0]


def _check_schedule(eps_schedule) -> tuple:
    eps = tuple(float(e) for e in eps_schedule)
    if not eps:
        raise ValueError("empty mollifier schedule")
    if any(e <= 0 for e in eps):
        raise DomainError("mollifier widths must be positive")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("mollifier schedule must be strictly decreasing")
    return eps


def local_time(x_path: PathBatch, level=0.0, eps_schedule=DEFAULT_EPS_SCHEDULE) -> LocalTimeEstimate:
    eps = _check_schedule(eps_schedule)
    lv = np.broadcast_to(np.asarray(level, dtype=float), (x_path.dim,))
    z = x_path.data - lv
    dt = x_path.grid.dt
    out = np.zeros((len(eps), x_path.count, x_path.grid.n_steps + 1))
    for e, width in enumerate(eps):
        phi = mollifier(z, width, x_path.dim)
        out[e, :, 1:] = np.cumsum(0.5 * dt * (phi[:, 1:] + phi[:, :-1]), axis=1)
    return LocalTimeEstimate(eps, tuple(lv.tolist()), x_path.grid, out)


def stabilized(estimates, tol: float = STABILIZATION_TOL) -> list[bool]:
    """Relative change between successive schedule entries below ``tol``."""
    v = [float(e.value if isinstance(e, MCEstimate) else e) for e in estimates]
    return [abs(b - a) <= tol * abs(a) for a, b in zip(v, v[1:])]


@dataclass(frozen=True)
class LocalTimeStudy:
    eps: tuple
    estimates: tuple  # MCEstimate per eps at t = T
    coupling: tuple  # coupling rule satisfied per eps
    stable: tuple


def local_time_study(h, grid: TimeGrid, count: int, seed: int, eps_schedule=DEFAULT_EPS_SCHEDULE,
                     level=0.0, dim: int = 1, alpha: float = 0.0, n_moll: int = 1,
                     method: str = "circulant", chunk: int = 2048, workers: int | None = None) -> LocalTimeStudy:
    """Monte Carlo mean of the mollified local time at ``t = T`` for each width.

    With ``alpha = 0`` the process is ``B^H`` itself; otherwise the mollified
    skew equation with ``n_moll`` is solved first.
    """
    hp = as_hurst(h)
    eps = _check_schedule(eps_schedule)
    cfg = SkewConfig(alpha, (0.0,) * dim, hp.h, grid, n_moll, dim, method)

    def run(lo: int, hi: int):
        if hp.h == 0.5:
            noise = _brownian(grid, dim, hi - lo, seed, lo)
        else:
            noise = sample_fbm(method, hp, grid, dim, hi - lo, seed, start=lo, workers=1)
        x = noise if alpha == 0 else solve_skew_mollified(cfg, noise)
        lt = local_time(x, level, eps).at(-1)
        return [moments(lt[e]) for e in range(len(eps))], [coupling_ok(e, noise) for e in eps]

    parts = rng.map_chunks(run, count, chunk=chunk, workers=workers)
    ests = tuple(combine([p[0][e] for p in parts]) for e in range(len(eps)))
    coup = tuple(all(p[1][e] for p in parts) for e in range(len(eps)))
    return LocalTimeStudy(eps, ests, coup, tuple(stabilized(ests)))


def _brownian(grid: TimeGrid, dim: int, count: int, seed: int, start: int) -> PathBatch:
    from .fbm import sample_wiener

    w = sample_wiener(grid, dim, count, seed, start=start, workers=1)
    return PathBatch(dim, grid, seed, w.data, PathKind.FBM, "wiener", 0.5, start)


def brownian_local_time_mean(t: float, eps: float) -> float:
    """``E int_0^t phi_eps(W_s) ds = sqrt(2/pi) (sqrt(t + eps) - sqrt(eps))`` for d = 1."""
    return math.sqrt(2.0 / math.pi) * (math.sqrt(t + eps) - math.sqrt(eps))
