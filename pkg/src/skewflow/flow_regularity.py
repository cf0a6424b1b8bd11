"""Spatial derivatives of the Euler flow ``x -> X^x_t``.

Three routes to the Jacobian: the variational equation integrated alongside
the Euler scheme, the truncated Picard series of iterated simplex integrals
of ``Db(X)``, and central finite differences on common noise.  Second
derivatives come from the second variational equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from .errors import GridMismatchError
from .fbm import PathBatch, PathKind, TimeGrid, as_hurst, sample_fbm
from .girsanov import DriftSpec
from .skew_sde import SkewConfig, euler_solve, gaussian_drift

FD_STEP = {1: 1e-4, 2: 1e-2}


def _require(b: DriftSpec, attr: str):
    fn = getattr(b, attr)
    if fn is None:
        raise ValueError(f"drift {b.description!r} has no analytic {attr}")
    return fn


def _check_solution(x_path: PathBatch) -> None:
    if x_path.kind is not PathKind.SOLUTION:
        raise GridMismatchError("expected a solution batch from euler_solve")


def variational_jacobian(b: DriftSpec, x_path: PathBatch, scheme: str = "euler") -> np.ndarray:
    """``J`` with shape ``(count, n+1, d, d)``, ``J_0 = I``.

    ``scheme="euler"`` gives ``J_{i+1} = (I + Db(X_i) dt) J_i``, the exact
    derivative of the Euler map; ``"exponential"`` uses ``expm(Db(X_i) dt)``.
    """
    _check_solution(x_path)
    jac = _require(b, "jacobian")
    count, n1, d = x_path.data.shape
    dt = x_path.grid.dt
    t = x_path.grid.nodes
    out = np.empty((count, n1, d, d))
    j = np.broadcast_to(np.eye(d), (count, d, d)).copy()
    out[:, 0] = j
    for i in range(n1 - 1):
        a = jac(t[i], x_path.data[:, i]) * dt
        if scheme == "euler":
            j = j + a @ j
        elif scheme == "exponential":
            j = _expm_batch(a) @ j
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
        out[:, i + 1] = j
    return out


def _expm_batch(a: np.ndarray, terms: int = 30) -> np.ndarray:
    # Taylor series; the arguments are Db * dt, far inside the unit ball
    d = a.shape[-1]
    out = np.broadcast_to(np.eye(d), a.shape).copy()
    term = out.copy()
    for r in range(1, terms):
        term = term @ a / r
        out = out + term
        if np.max(np.abs(term)) < 1e-18:
            break
    return out


def picard_jacobian(b: DriftSpec, x_path: PathBatch, M: int) -> np.ndarray:
    """Truncated series ``I + sum_{m<=M} int_{Delta^m} Db(X_{u_1}) ... Db(X_{u_m}) du``.

    ``Db(X)`` is frozen at the left node of each cell and the iterated
    integrals ``S_m`` are propagated cell by cell with the exact update
    ``S_m(t + dt) = sum_{j<=m} (A dt)^j / j! S_{m-j}(t)``, so every level is a
    running integral of the previous one.  Returns ``(count, n+1, d, d)``.
    """
    if M < 1:
        raise ValueError("truncation order M must be >= 1")
    _check_solution(x_path)
    jac = _require(b, "jacobian")
    count, n1, d = x_path.data.shape
    dt = x_path.grid.dt
    t = x_path.grid.nodes
    eye = np.broadcast_to(np.eye(d), (count, d, d))
    levels = [eye.copy()] + [np.zeros((count, d, d)) for _ in range(M)]
    out = np.empty((count, n1, d, d))
    out[:, 0] = eye
    for i in range(n1 - 1):
        a = jac(t[i], x_path.data[:, i]) * dt
        powers = [eye]
        for j in range(1, M + 1):
            powers.append(powers[-1] @ a / j)
        new = [levels[0]]
        for m in range(1, M + 1):
            acc = levels[m].copy()
            for j in range(1, m + 1):
                acc += powers[j] @ levels[m - j]
            new.append(acc)
        levels = new
        out[:, i + 1] = sum(levels)
    return out


def picard_order_for(b_sup: float, t_end: float, tol: float = 1e-6) -> int:
    """Smallest ``M`` with ``(T sup|Db|)^(M+1) / (M+1)! < tol``."""
    m = 1
    while (t_end * b_sup) ** (m + 1) / math.factorial(m + 1) >= tol:
        m += 1
    return m


def second_variation(b: DriftSpec, x_path: PathBatch, jacobian_path: np.ndarray) -> np.ndarray:
    """``K[i, j, k] = d^2 X^i / dx_j dx_k`` with shape ``(count, n+1, d, d, d)``.

    Euler step of ``K' = D^2 b(X)[J, J] + Db(X) K``, ``K_0 = 0``.
    """
    _check_solution(x_path)
    jac = _require(b, "jacobian")
    hes = _require(b, "hessian")
    count, n1, d = x_path.data.shape
    if jacobian_path.shape != (count, n1, d, d):
        raise GridMismatchError("Jacobian path does not match the solution batch")
    dt = x_path.grid.dt
    t = x_path.grid.nodes
    out = np.zeros((count, n1, d, d, d))
    k = np.zeros((count, d, d, d))
    for i in range(n1 - 1):
        x = x_path.data[:, i]
        jm = jacobian_path[:, i]
        forcing = np.einsum("pabc,pbj,pck->pajk", hes(t[i], x), jm, jm)
        k = k + dt * (forcing + np.einsum("pab,pbjk->pajk", jac(t[i], x), k))
        out[:, i + 1] = k
    return out


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlowDerivativeEstimate:
    order: int
    method: str
    x: tuple
    t: float
    value: np.ndarray = field(repr=False)
    mc_stderr: np.ndarray = field(repr=False)
    per_path: np.ndarray | None = field(default=None, repr=False)
    cancellation: bool = False

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if not np.all(np.isfinite(self.value)):
            raise ValueError("non-finite derivative estimate")


def estimate_from_paths(order: int, method: str, x, t: float, per_path: np.ndarray) -> FlowDerivativeEstimate:
    n = per_path.shape[0]
    mean = per_path.mean(axis=0)
    se = per_path.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return FlowDerivativeEstimate(order, method, tuple(np.atleast_1d(x).tolist()), t, mean, se, per_path)


def finite_diff_flow(solver: Callable[[np.ndarray], PathBatch], x, step: float | None = None,
                     order: int = 1, time_index: int = -1) -> FlowDerivativeEstimate:
    """Central differences of ``solver(x0)`` at ``time_index``.

    ``solver`` must reuse the same noise for every call.  Order 1 uses
    ``(X(x+h e_j) - X(x-h e_j)) / 2h``; order 2 uses the four-point mixed
    stencil with ``4 h^2`` denominators (``x +- 2h e_j`` on the diagonal).
    The cancellation flag is raised when a stencil spread falls below
    ``1e3 * machine epsilon * |X|``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x.size
    step = FD_STEP[order] if step is None else float(step)
    e = np.eye(d) * step
    cache: dict[tuple, np.ndarray] = {}

    def val(shift):
        key = tuple(np.round(shift / step).astype(int))
        if key not in cache:
            cache[key] = solver(x + shift).data[:, time_index, :]
        return cache[key]

    spreads = []
    if order == 1:
        cols = []
        for j in range(d):
            plus, minus = val(e[j]), val(-e[j])
            spreads.append((plus, minus))
            cols.append((plus - minus) / (2.0 * step))
        per_path = np.stack(cols, axis=-1)  # (count, i, j)
    elif order == 2:
        per_path = np.empty(val(np.zeros(d)).shape + (d, d))
        for j in range(d):
            for k in range(d):
                pp, pm = val(e[j] + e[k]), val(e[j] - e[k])
                mp, mm = val(-e[j] + e[k]), val(-e[j] - e[k])
                spreads.append((pp, mm))
                per_path[..., j, k] = (pp - pm - mp + mm) / (4.0 * step * step)
    else:
        raise ValueError("order must be 1 or 2")
    scale = np.max(np.abs(val(np.zeros(d)))) + 1.0
    cancel = any(np.max(np.abs(a - b)) < 1e3 * np.finfo(float).eps * scale for a, b in spreads)
    sol = solver(x)
    est = estimate_from_paths(order, "finite-diff", x, float(sol.grid.nodes[time_index]), per_path)
    return FlowDerivativeEstimate(est.order, est.method, est.x, est.t, est.value, est.mc_stderr,
                                  per_path, cancel)


def common_noise_solver(b: DriftSpec, noise: PathBatch) -> Callable[[np.ndarray], PathBatch]:
    return lambda x0: euler_solve(b, x0, noise)


# ---------------------------------------------------------------------------


def derivative_norm(tensor: np.ndarray, order: int) -> np.ndarray:
    """Operator 2-norm of a Jacobian (order 1) or Frobenius norm of a rank-3 tensor (order 2)."""
    if order == 1:
        return np.linalg.norm(tensor, ord=2, axis=(-2, -1))
    if order == 2:
        return np.sqrt(np.sum(tensor**2, axis=(-3, -2, -1)))
    raise ValueError("order must be 1 or 2")


@dataclass(frozen=True)
class MomentRow:
    n_moll: int
    x: tuple
    k: int
    p: float
    estimate: float
    stderr: float


@dataclass(frozen=True)
class MomentTable:
    rows: tuple
    l1_norm: dict

    def sup_over_x(self) -> dict[int, MomentRow]:
        out: dict[int, MomentRow] = {}
        for r in self.rows:
            if r.n_moll not in out or r.estimate > out[r.n_moll].estimate:
                out[r.n_moll] = r
        return out

    def successive_ratios(self) -> list[float]:
        sup = self.sup_over_x()
        ns = sorted(sup)
        return [sup[b].estimate / sup[a].estimate for a, b in zip(ns, ns[1:])]


def flow_derivative_paths(b: DriftSpec, x0, noise: PathBatch, k: int) -> np.ndarray:
    """Terminal ``d^k X / dx^k`` per path (variational equations)."""
    sol = euler_solve(b, x0, noise)
    j = variational_jacobian(b, sol)
    if k == 1:
        return j[:, -1]
    if k == 2:
        return second_variation(b, sol, j)[:, -1]
    raise ValueError("k must be 1 or 2")


def moment_table(base: SkewConfig, n_values, p: float, k: int, x_grid, count: int,
                 seed: int = 0) -> MomentTable:
    """``E ||d^k X^{n,x}_T||^p`` per ``(n, x)`` on common noise.

    Order 1 uses the operator 2-norm of the Jacobian, order 2 the Frobenius norm.
    """
    noise = sample_fbm(base.method, base.h, base.grid, base.dim, count, seed)
    rows = []
    l1 = {}
    for n in n_values:
        cfg = base.with_n(n)
        b = cfg.drift()
        l1[n] = abs(cfg.alpha) * math.sqrt(cfg.dim)
        for x in x_grid:
            x0 = np.broadcast_to(np.asarray(x, dtype=float), (cfg.dim,))
            vals = derivative_norm(flow_derivative_paths(b, x0, noise, k), k) ** p
            se = vals.std(ddof=1) / math.sqrt(count) if count > 1 else 0.0
            rows.append(MomentRow(n, tuple(x0.tolist()), k, p, float(vals.mean()), float(se)))
    return MomentTable(tuple(rows), l1)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SobolevEstimate:
    box: tuple
    k: int
    p: float
    estimate: float
    nodes: int
    terms: tuple

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("p must be >= 2")
        if not self.estimate >= 0:
            raise ValueError("Sobolev estimate must be non-negative")


def sobolev_norm_estimate(derivs: dict, box, k: int, p: float) -> SobolevEstimate:
    """``sum_{i<=k} (int_U E ||D^i X(x)||^p dx)^(2/p)`` by tensorized Simpson quadrature.

    ``derivs[i]`` holds ``D^i X`` sampled on a uniform box grid with shape
    ``(count, n_1, ..., n_m, *tensor_dims)`` where ``m = len(box)``.
    """
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    missing = [i for i in range(k + 1) if i not in derivs]
    if missing:
        raise ValueError(f"missing derivative orders {missing}")
    m = len(box)
    terms = []
    nodes = None
    for i in range(k + 1):
        arr = np.asarray(derivs[i], dtype=float)
        grid_shape = arr.shape[1 : 1 + m]
        nodes = grid_shape[0] if nodes is None else nodes
        tens_axes = tuple(range(1 + m, arr.ndim))
        norm = np.sqrt(np.sum(arr**2, axis=tens_axes)) if tens_axes else np.abs(arr)
        integrand = np.mean(norm**p, axis=0)
        for ax, (lo, hi) in enumerate(box):
            x = np.linspace(lo, hi, grid_shape[ax])
            integrand = simpson(integrand, x=x, axis=0)
        terms.append(float(integrand) ** (2.0 / p))
    return SobolevEstimate(box, k, p, float(sum(terms)), int(nodes), tuple(terms))


def flow_on_box(b: DriftSpec, noise: PathBatch, box, nodes: int, k: int) -> dict:
    """``D^i X_T`` for ``i <= k`` on a tensor grid over ``box`` (common noise)."""
    axes = [np.linspace(lo, hi, nodes) for lo, hi in box]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(box))
    d = noise.dim
    if len(box) != d:
        raise ValueError("box dimension must equal the state dimension")
    out = {i: [] for i in range(k + 1)}
    for x0 in mesh:
        sol = euler_solve(b, x0, noise)
        out[0].append(sol.data[:, -1])
        if k >= 1:
            j = variational_jacobian(b, sol)
            out[1].append(j[:, -1])
        if k >= 2:
            out[2].append(second_variation(b, sol, j)[:, -1])
    shape = (noise.count,) + (nodes,) * d
    return {i: np.stack(v, axis=1).reshape(shape + np.asarray(v[0]).shape[1:]) for i, v in out.items()}
