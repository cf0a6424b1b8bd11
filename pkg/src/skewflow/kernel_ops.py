"""The square-integrable Volterra kernel of fBm (H < 1/2) and its operators.

``K_H(t, s) = c_H [ (t/s)^(H-1/2) (t-s)^(H-1/2)
                    - (H-1/2) s^(1/2-H) int_s^t u^(H-3/2) (u-s)^(H-1/2) du ]``

with ``R_H(t, s) = int_0^{t ^ s} K_H(t, u) K_H(s, u) du``.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import integrate, special
from scipy.linalg import solve_triangular

from .errors import DomainError, FactorizationError, GridMismatchError
from .fbm import PathBatch, PathKind, TimeGrid, as_hurst
from .frac_calc import (
    SampledFunction,
    _left_integral_array,
    beta_fn,
    gamma_fn,
    integral_weights,
    rl_derivative_right,
    rl_integral_left,
)


def _low_h(h) -> float:
    h = as_hurst(h).h
    if not h < 0.5:
        raise DomainError(f"kernel operators need h < 1/2, got {h}")
    return h


def c_h(h) -> float:
    """Normalization ``sqrt(2H / ((1-2H) B(1-2H, H+1/2)))``."""
    h = _low_h(h)
    return math.sqrt(2.0 * h / ((1.0 - 2.0 * h) * beta_fn(1.0 - 2.0 * h, h + 0.5)))


def _inner_quad(h: float, t: float, s: float) -> float:
    # v = (u - s)^(H+1/2) turns (u-s)^(H-1/2) du into dv / (H+1/2)
    p = h + 0.5
    vmax = (t - s) ** p

    def f(v):
        return (s + v ** (1.0 / p)) ** (h - 1.5) / p

    val, _ = integrate.quad(f, 0.0, vmax, epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def _inner_closed(h: float, t, s):
    # int_s^t u^(H-3/2)(u-s)^(H-1/2) du = s^(2H-1) B(1-2H, H+1/2) (1 - I_{s/t}(1-2H, H+1/2))
    a, b = 1.0 - 2.0 * h, h + 0.5
    return s ** (2.0 * h - 1.0) * special.beta(a, b) * special.betaincc(a, b, s / t)


def kh_kernel(h, t: float, s: float) -> float:
    """``K_H(t, s)`` for ``0 < s < t``, inner integral by adaptive quadrature."""
    h = _low_h(h)
    t, s = float(t), float(s)
    if not 0.0 < s < t:
        raise DomainError(f"kh_kernel needs 0 < s < t, got t={t}, s={s}")
    first = (t / s) ** (h - 0.5) * (t - s) ** (h - 0.5)
    second = (0.5 - h) * s ** (0.5 - h) * _inner_quad(h, t, s)
    return c_h(h) * (first + second)


def kh_kernel_array(h, t, s) -> np.ndarray:
    """Vectorized ``K_H(t, s)`` using the incomplete-Beta closed form of the inner integral.

    Entries with ``s >= t`` are zero.
    """
    h = _low_h(h)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    t, s = np.broadcast_arrays(t, s)
    out = np.zeros(t.shape)
    ok = (s > 0) & (s < t)
    tt, ss = t[ok], s[ok]
    first = (tt / ss) ** (h - 0.5) * (tt - ss) ** (h - 0.5)
    second = (0.5 - h) * ss ** (0.5 - h) * _inner_closed(h, tt, ss)
    out[ok] = c_h(h) * (first + second)
    return out


# ---------------------------------------------------------------------------
# discretized Volterra kernel


_REG_NODES, _REG_WEIGHTS = np.polynomial.legendre.leggauss(4)
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)
_JACOBI_ORDER = 24
_ORIGIN_LEVELS = 30


def _jacobi_integral(h: float, t: np.ndarray, lo: np.ndarray, width: float, left: bool, right: bool):
    # int_lo^{lo+width} K(t,s)^2 ds with the (s-lo)^(2H-1), (hi-s)^(2H-1) behaviour in the weight
    a = 2.0 * h - 1.0 if left else 0.0
    b = 2.0 * h - 1.0 if right else 0.0
    x, w = special.roots_jacobi(_JACOBI_ORDER, b, a)
    s = lo[:, None] + 0.5 * width * (x[None, :] + 1.0)
    k = kh_kernel_array(h, t[:, None], s)
    f = k * k / ((s - lo[:, None]) ** a * (lo[:, None] + width - s) ** b)
    return (0.5 * width) ** (1.0 + a + b) * (f @ w)


def _origin_integral(h: float, t: np.ndarray, hi: float):
    # K(t,s)^2 mixes powers s^(2H-1), s^0, s^(1-2H) near 0: refine geometrically
    total = _jacobi_integral(h, t, np.zeros(t.size), hi * 2.0**-_ORIGIN_LEVELS, True, False)
    for level in range(_ORIGIN_LEVELS):
        lo, width = hi * 2.0 ** -(level + 1), hi * 2.0 ** -(level + 1)
        s = lo + 0.5 * width * (_GL_NODES + 1.0)
        k = kh_kernel_array(h, t[:, None], s[None, :])
        total = total + 0.5 * width * (k * k) @ _GL_WEIGHTS
    return total


@lru_cache(maxsize=16)
def volterra_matrix(h: float, t_end: float, n_steps: int, node: str = "rms") -> np.ndarray:
    """Lower-triangular ``(n, n)`` matrix ``M`` with ``B(t_i) = sum_j M[i-1, j] dW_j``.

    ``node="rms"`` uses the root mean square of ``K_H(t_i, .)`` over each cell,
    so every row reproduces ``t_i^2H`` up to quadrature error;
    ``node="midpoint"`` evaluates the kernel at the cell midpoint.
    """
    grid = TimeGrid(t_end, n_steps)
    n, dt = grid.n_steps, grid.dt
    if h == 0.5:
        mat = np.tril(np.ones((n, n)))
    elif node == "midpoint":
        h = _low_h(h)
        t = grid.nodes[1:]
        mat = kh_kernel_array(h, t[:, None], grid.midpoints[None, :])
    elif node == "rms":
        h = _low_h(h)
        mat = np.zeros((n, n))
        t = grid.nodes[1:]
        mat[0, 0] = (_origin_integral(h, t[:1], 0.5 * dt)
                     + _jacobi_integral(h, t[:1], np.full(1, 0.5 * dt), 0.5 * dt, False, True))[0] / dt
        if n > 1:
            rows = np.arange(1, n)
            mat[rows, 0] = _origin_integral(h, t[1:], dt) / dt
            mat[rows, rows] = _jacobi_integral(h, t[1:], rows * dt, dt, False, True) / dt
        ii, jj = np.tril_indices(n, -2)
        jj = jj + 1  # regular cells 1 .. i-1 of row i
        if ii.size:
            s = (jj * dt)[:, None] + 0.5 * dt * (_REG_NODES[None, :] + 1.0)
            k = kh_kernel_array(h, t[ii][:, None], s)
            mat[ii, jj] = 0.5 * (k * k) @ _REG_WEIGHTS
        mat = np.sqrt(mat)
    else:
        raise ValueError(f"unknown Volterra node rule {node!r}")
    mat.setflags(write=False)
    return mat


def wiener_from_fbm(h, bh: PathBatch) -> PathBatch:
    """Recover the driving Wiener batch of a Volterra-generated fBm batch."""
    hp = as_hurst(h)
    if bh.kind is not PathKind.FBM or not bh.method.startswith("volterra"):
        raise GridMismatchError("wiener_from_fbm needs a batch produced by sample_fbm_volterra")
    if bh.h is not None and not math.isclose(bh.h, hp.h):
        raise GridMismatchError(f"batch was generated with h={bh.h}, not {hp.h}")
    grid = bh.grid
    n = grid.n_steps
    vals = bh.data[:, 1:, :].transpose(1, 0, 2).reshape(n, -1)
    if hp.h == 0.5:
        dw = np.diff(np.vstack([np.zeros((1, vals.shape[1])), vals]), axis=0)
    else:
        node = bh.method.split("-", 1)[1]
        mat = volterra_matrix(hp.h, grid.t_end, n, node)
        diag = np.diag(mat)
        if np.any(diag <= 0) or diag.min() < 1e-14 * np.abs(mat).max():
            raise FactorizationError(f"Volterra kernel matrix is numerically singular (h={hp.h}, n={n})")
        dw = solve_triangular(mat, vals, lower=True, check_finite=False)
    dw = dw.reshape(n, bh.count, bh.dim).transpose(1, 0, 2)
    data = np.zeros_like(bh.data)
    data[:, 1:, :] = np.cumsum(dw, axis=1)
    return PathBatch(bh.dim, grid, bh.seed, data, PathKind.WIENER, "wiener", 0.5, bh.start)


# ---------------------------------------------------------------------------
# operators on sampled functions


def _check_origin(phi: SampledFunction) -> None:
    if phi.a != 0.0:
        raise DomainError(f"kernel operators act on [0, T]; got a={phi.a}")


def _singular_weighted(values: np.ndarray, x: np.ndarray, step: float, beta: float) -> np.ndarray:
    """``x^beta * values`` with a finite node-0 value for ``beta < 0``.

    The node-0 value is chosen so the trapezoid mass of the first cell matches
    ``int_0^step y^beta dy * values[0]``.
    """
    out = np.empty_like(values, dtype=float)
    out[..., 1:] = x[1:] ** beta * values[..., 1:]
    if beta < 0:
        out[..., 0] = values[..., 0] * step**beta * (1.0 - beta) / (1.0 + beta)
    else:
        out[..., 0] = values[..., 0] * (1.0 if beta == 0 else 0.0)
    return out


def kh_star(h, phi: SampledFunction, representation: str = "derivative", refine: int = 8) -> SampledFunction:
    """``K_H^* phi`` on the interior nodes of the grid (endpoints ``0`` and ``T`` dropped).

    ``representation="derivative"`` uses
    ``c_H Gamma(H+1/2) s^(1/2-H) D_{T-}^{1/2-H}[u^(H-1/2) phi](s)``;
    ``"integral"`` uses the right derivative of ``phi`` itself plus the
    correction ``int_s^T phi(t) (t-s)^(H-3/2) (1 - (t/s)^(H-1/2)) dt``.
    ``refine`` sets the sub-grid factor used by the derivative form.
    """
    h = _low_h(h)
    _check_origin(phi)
    x, step, n = phi.grid, phi.step, phi.n
    alpha = 0.5 - h
    scale = c_h(h) * gamma_fn(h + 0.5)
    if representation == "derivative":
        # u^(H-1/2) is sampled exactly on a sub-grid; phi is interpolated linearly
        fine = np.linspace(phi.a, phi.b, (n - 1) * refine + 1)
        g = _singular_weighted(np.interp(fine, x, phi.values), fine, step / refine, h - 0.5)
        d = rl_derivative_right(SampledFunction(phi.a, phi.b, g), alpha).values[::refine]
        vals = scale * x[1:-1] ** alpha * d[1:-1]
    elif representation == "integral":
        d = rl_derivative_right(phi, alpha).values
        p = h + 0.5  # (t-s)^(H-3/2) = (t-s)^(p-1) / (t-s)
        corr = np.empty(n - 2)
        for i in range(1, n - 1):
            s = x[i]
            tail = x[i:] - s
            g = np.empty(tail.size)
            g[0] = (0.5 - h) / s
            g[1:] = -np.expm1((h - 0.5) * np.log1p(tail[1:] / s)) / tail[1:]
            w = integral_weights(tail.size - 1, p) * (step**p / (p * (p + 1.0)))
            corr[i - 1] = np.dot(w, phi.values[i:] * g)
        vals = scale * d[1:-1] + c_h(h) * (0.5 - h) * corr
    else:
        raise ValueError(f"unknown representation {representation!r}")
    return SampledFunction(x[1], x[-2], vals)


def kh_operator(h, phi: SampledFunction) -> SampledFunction:
    """``K_H phi = I^{2H} s^(1/2-H) I^{1/2-H} s^(H-1/2) phi`` on the full grid.

    The result lies in ``I_{0+}^{H+1/2}(L^2)``.  For ``h = 1/2`` this is the running integral.
    """
    hp = as_hurst(h)
    _check_origin(phi)
    if hp.h == 0.5:
        return rl_integral_left(phi, 1.0)
    h = _low_h(hp)
    return phi.with_values(_kh_operator_array(h, phi.values, phi.step, phi.grid))


def _kh_operator_array(h, values, step, x):
    alpha = 0.5 - h
    v = _singular_weighted(values, x, step, h - 0.5)
    v = _left_integral_array(v, step, alpha)
    v = _singular_weighted(v, x, step, alpha)
    return _left_integral_array(v, step, 2.0 * h)


def kh_inverse_array(h: float, dphi: np.ndarray, step: float) -> np.ndarray:
    """``s^(H-1/2) I^{1/2-H}[s^(1/2-H) dphi]`` along the last axis; value 0 at ``s = 0``."""
    if h == 0.5:
        return np.array(dphi, dtype=float)
    n = dphi.shape[-1]
    x = np.arange(n) * step
    alpha = 0.5 - h
    v = _singular_weighted(dphi, x, step, alpha)
    v = _left_integral_array(v, step, alpha)
    out = np.zeros_like(v)
    out[..., 1:] = x[1:] ** (h - 0.5) * v[..., 1:]
    return out


def kh_inverse(h, phi: SampledFunction, phi_prime: SampledFunction | None) -> SampledFunction:
    """``K_H^{-1} phi = s^(H-1/2) I^{1/2-H} s^(1/2-H) phi'`` for absolutely continuous ``phi``.

    The derivative must be supplied; the value at ``s = 0`` is its limit, 0.
    For ``h = 1/2`` the output is ``phi_prime``.
    """
    hp = as_hurst(h)
    if phi_prime is None:
        raise ValueError("kh_inverse needs the derivative samples phi_prime")
    if not phi.same_grid(phi_prime):
        raise GridMismatchError("phi and phi_prime must share a grid")
    _check_origin(phi)
    if hp.h != 0.5:
        _low_h(hp)
    return phi.with_values(kh_inverse_array(hp.h, phi_prime.values, phi.step))


def kernel_factorization(h, t: float, s: float) -> float:
    """``int_0^{t ^ s} K_H(t, u) K_H(s, u) du`` by adaptive quadrature.

    The integrable singularities at ``u = 0`` and ``u = t ^ s`` are placed on
    interval endpoints, where ``quad`` does not evaluate.
    """
    h = _low_h(h)
    t, s = float(t), float(s)
    if not (t > 0 and s > 0):
        raise DomainError(f"need t, s > 0, got t={t}, s={s}")
    m = min(t, s)

    def f(u):
        return float(kh_kernel_array(h, t, u) * kh_kernel_array(h, s, u))

    total = 0.0
    for lo, hi in ((0.0, 0.5 * m), (0.5 * m, m)):
        val, _ = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-10, limit=400)
        total += val
    return total
