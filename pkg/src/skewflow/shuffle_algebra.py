"""Shuffle permutations and iterated integrals over ordered simplices.

``Delta^m_{theta,t} = {theta < s_m < ... < s_1 < t}``; factor ``f_j`` is
evaluated at ``s_j`` so ``f_1`` sits at the latest time.  The shuffle identity
reads

    int_{Delta^m} prod f_j  *  int_{Delta^n} prod g_i
        = sum_{sigma in S(m,n)} int_{Delta^{m+n}} prod_j c_{sigma^{-1}(j)}(w_j)

with ``c = (f_1, ..., f_m, g_1, ..., g_n)``: position ``sigma(i)`` of the
merged sequence carries ``c_i``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Chebyshev
from scipy.special import eval_hermitenorm

from . import rng
from .errors import BudgetError, DomainError
from .fbm import TimeGrid, as_hurst, sample_fbm
from .stats import MCEstimate, combine, moments

SHUFFLE_BUDGET = 12
DETERMINISTIC_MAX = 6
MC_MAX_FACTORS = 4
CHEB_DEGREE = 64


@dataclass(frozen=True)
class ShuffleSet:
    m: int
    n: int
    permutations: tuple = field(repr=False)

    def __len__(self) -> int:
        return len(self.permutations)

    def merged_order(self, sigma: tuple) -> tuple:
        """0-based source index at each merged position (``sigma^{-1}``)."""
        inv = [0] * (self.m + self.n)
        for i, pos in enumerate(sigma):
            inv[pos - 1] = i
        return tuple(inv)


def enumerate_shuffles(m: int, n: int) -> ShuffleSet:
    """All ``sigma`` (1-based images) increasing on ``{1..m}`` and on ``{m+1..m+n}``."""
    if m < 0 or n < 0:
        raise ValueError("block sizes must be non-negative")
    if m + n > SHUFFLE_BUDGET:
        raise BudgetError(f"m + n = {m + n} exceeds the shuffle budget {SHUFFLE_BUDGET}")
    perms = []
    slots = range(1, m + n + 1)
    for first in itertools.combinations(slots, m):
        rest = tuple(s for s in slots if s not in first)
        perms.append(tuple(first) + rest)
    return ShuffleSet(m, n, tuple(perms))


# ---------------------------------------------------------------------------
# simplex integrals


def _running_chain(factors: Sequence[Callable], theta: float, t: float, deg: int) -> Chebyshev:
    """``G(s) = int_{Delta^m_{theta,s}} prod f_j`` as a Chebyshev series in ``s``."""
    dom = [theta, t]
    g = Chebyshev([1.0], domain=dom)
    for f in reversed(factors):
        prev = g
        g = Chebyshev.interpolate(lambda s, f=f, prev=prev: np.asarray(f(s), dtype=float) * prev(s),
                                  deg, domain=dom).integ(lbnd=theta)
    return g


def simplex_quadrature(factors: Sequence[Callable], theta: float, t: float, method: str = "chebyshev",
                       deg: int = CHEB_DEGREE, count: int = 100_000, seed: int = 0):
    """``int_{Delta^m_{theta,t}} prod_j f_j(s_j) ds``.

    ``method="chebyshev"`` nests spectral running integrals (one per factor,
    ``m <= 6``) and returns a float.  ``method="mc"`` averages the integrand at
    sorted uniform points, times ``(t-theta)^m / m!``, and returns an
    :class:`MCEstimate`.
    """
    if not theta < t:
        raise DomainError(f"need theta < t, got {theta}, {t}")
    m = len(factors)
    if method == "chebyshev":
        if m > DETERMINISTIC_MAX:
            raise BudgetError(f"deterministic nesting limited to {DETERMINISTIC_MAX} factors")
        if m == 0:
            return 1.0
        return float(_running_chain(factors, theta, t, deg)(t))
    if method == "mc":
        vol = (t - theta) ** m / math.factorial(m)
        if m == 0:
            return MCEstimate(1.0, 0.0, count)
        u = rng.uniform_block(seed, rng.SIMPLEX, 0, count, m)
        s = theta + (t - theta) * -np.sort(-u, axis=1)  # s_1 > ... > s_m
        vals = np.ones(count)
        for j, f in enumerate(factors):
            vals = vals * np.asarray(f(s[:, j]), dtype=float)
        est = combine([moments(vals * vol)])
        return est
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class ShuffleResidual:
    lhs: float
    rhs: float
    residual: float
    terms: int


def verify_shuffle_identity(f_list: Sequence[Callable], g_list: Sequence[Callable],
                            theta: float, t: float, deg: int = CHEB_DEGREE) -> ShuffleResidual:
    """``|prod of simplex integrals - shuffle sum| / |lhs|`` by deterministic quadrature."""
    m, n = len(f_list), len(g_list)
    lhs = simplex_quadrature(f_list, theta, t, deg=deg) * simplex_quadrature(g_list, theta, t, deg=deg)
    combined = list(f_list) + list(g_list)
    shuffles = enumerate_shuffles(m, n)
    if m + n > 2 * DETERMINISTIC_MAX:
        raise BudgetError("shuffle sum too long for deterministic nesting")
    rhs = 0.0
    for sigma in shuffles.permutations:
        seq = [combined[i] for i in shuffles.merged_order(sigma)]
        rhs += float(_running_chain(seq, theta, t, deg)(t))
    return ShuffleResidual(lhs, rhs, abs(lhs - rhs) / max(abs(lhs), 1e-300), len(shuffles))


# ---------------------------------------------------------------------------
# partial shuffles and derivative bookkeeping


@dataclass(frozen=True)
class DerivativeLedger:
    """Per-factor multi-indices ``alpha_j in N_0^d``."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(tuple(int(v) for v in a) for a in self.indices)
        if any(v < 0 for a in idx for v in a):
            raise ValueError("multi-indices must be non-negative")
        if len({len(a) for a in idx}) > 1:
            raise ValueError("all multi-indices must share one dimension")
        object.__setattr__(self, "indices", idx)

    @property
    def total(self) -> int:
        return sum(sum(a) for a in self.indices)

    def level_totals(self) -> tuple:
        """``|alpha^(l)|`` for each coordinate ``l``."""
        if not self.indices:
            return ()
        return tuple(int(v) for v in np.sum(np.array(self.indices), axis=0))

    def factor_orders(self) -> tuple:
        return tuple(sum(a) for a in self.indices)

    def __add__(self, other: "DerivativeLedger") -> "DerivativeLedger":
        return DerivativeLedger(self.indices + other.indices)

    def permuted(self, order: Sequence[int]) -> "DerivativeLedger":
        return DerivativeLedger(tuple(self.indices[i] for i in order))


def total_derivative_order(f_part: DerivativeLedger, g_part: DerivativeLedger) -> int:
    return f_part.total + g_part.total


@dataclass(frozen=True)
class ShuffleExpansion:
    """Integrand sequences of the partial-shuffle expansion.

    Each sequence lists source labels ``("f", j)`` / ``("g", i)`` (0-based) in
    simplex order, i.e. position 0 is the latest time.
    """

    n: int
    p: int
    k: int
    sequences: tuple
    ledgers: tuple

    def __len__(self) -> int:
        return len(self.sequences)

    def factors(self, seq, f_list, g_list) -> list:
        return [f_list[j] if kind == "f" else g_list[j] for kind, j in seq]

    def totals(self) -> tuple:
        return tuple(led.total for led in self.ledgers)


def _shuffle_labels(a: tuple, b: tuple) -> list[tuple]:
    s = enumerate_shuffles(len(a), len(b))
    c = a + b
    return [tuple(c[i] for i in s.merged_order(sig)) for sig in s.permutations]


def _expand_labels(f_labels: tuple, g_labels: tuple, k: int) -> list[tuple]:
    if not g_labels:
        return [f_labels]
    if k == 0:
        return []  # the g-block lives on Delta^p_{theta,theta}
    if k == 1:
        return [f_labels[:1] + tail for tail in _shuffle_labels(g_labels, f_labels[1:])]
    return [f_labels[:1] + rest for rest in _expand_labels(f_labels[1:], g_labels, k - 1)]


def partial_shuffle_expand(f_list: Sequence, g_list: Sequence, k: int,
                           f_ledger: DerivativeLedger | None = None,
                           g_ledger: DerivativeLedger | None = None) -> ShuffleExpansion:
    """Expand the g-block nested below ``s_k`` into sums over ``Delta^{n+p}``.

    The outer factor ``f_1`` is peeled until the inner block sits directly
    under the current outermost variable; there the g-block shuffles with the
    remaining f-suffix.  ``k = 0`` with ``p > 0`` gives an empty expansion.
    """
    n, p = len(f_list), len(g_list)
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    if n + p > SHUFFLE_BUDGET:
        raise BudgetError(f"n + p = {n + p} exceeds the shuffle budget {SHUFFLE_BUDGET}")
    f_ledger = f_ledger or DerivativeLedger(tuple((0,) for _ in range(n)))
    g_ledger = g_ledger or DerivativeLedger(tuple((0,) for _ in range(p)))
    if len(f_ledger.indices) != n or len(g_ledger.indices) != p:
        raise ValueError("ledgers must have one multi-index per factor")
    f_labels = tuple(("f", j) for j in range(n))
    g_labels = tuple(("g", i) for i in range(p))
    seqs = _expand_labels(f_labels, g_labels, k)
    both = {("f", j): f_ledger.indices[j] for j in range(n)}
    both.update({("g", i): g_ledger.indices[i] for i in range(p)})
    ledgers = tuple(DerivativeLedger(tuple(both[lab] for lab in s)) for s in seqs)
    return ShuffleExpansion(n, p, k, tuple(seqs), ledgers)


def partial_shuffle_lhs(f_list: Sequence[Callable], g_list: Sequence[Callable], k: int,
                        theta: float, t: float, deg: int = CHEB_DEGREE) -> float:
    """The nested integral with the g-block over ``Delta^p_{theta, s_k}``."""
    if not g_list:
        return simplex_quadrature(list(f_list), theta, t, deg=deg)
    if k == 0:
        return 0.0
    inner = _running_chain(list(g_list), theta, t, deg)
    fk = f_list[k - 1]
    merged = list(f_list[: k - 1]) + [lambda s: np.asarray(fk(s), dtype=float) * inner(s)] + list(f_list[k:])
    return float(_running_chain(merged, theta, t, deg)(t))


def verify_partial_shuffle(f_list, g_list, k: int, theta: float, t: float,
                           deg: int = CHEB_DEGREE) -> ShuffleResidual:
    exp = partial_shuffle_expand(f_list, g_list, k)
    lhs = partial_shuffle_lhs(f_list, g_list, k, theta, t, deg)
    rhs = sum(float(_running_chain(exp.factors(s, f_list, g_list), theta, t, deg)(t)) for s in exp.sequences)
    scale = max(abs(lhs), abs(rhs), 1e-300)
    return ShuffleResidual(lhs, rhs, abs(lhs - rhs) / scale if scale > 1e-300 else 0.0, len(exp))


# ---------------------------------------------------------------------------
# Monte Carlo over fBm paths


@dataclass(frozen=True)
class BumpFactor:
    """``amp * prod_l exp(-z_l^2/2)`` with ``z = (y - center) / width``; ``odd`` multiplies by ``z_1``.

    ``alpha`` is the multi-index of the spatial derivative applied to the bump.
    """

    alpha: tuple
    center: float | tuple = 0.0
    width: float = 1.0
    amp: float = 1.0
    odd: bool = False
    constant: bool = False

    def evaluate(self, y: np.ndarray) -> np.ndarray:
        """``D^alpha f(y)`` for ``y`` of shape ``(..., d)``."""
        d = y.shape[-1]
        alpha = tuple(self.alpha) + (0,) * (d - len(self.alpha))
        if self.constant:
            return np.full(y.shape[:-1], self.amp if sum(alpha) == 0 else 0.0)
        c = np.broadcast_to(np.asarray(self.center, dtype=float), (d,))
        z = (y - c) / self.width
        out = np.full(y.shape[:-1], float(self.amp))
        for l in range(d):
            a = alpha[l]
            if l == 0 and self.odd:
                # z e^{-z^2/2} = -(e^{-z^2/2})'  =>  a-th derivative is (-1)^a He_{a+1}(z) e^{-z^2/2}
                poly = (-1.0) ** a * eval_hermitenorm(a + 1, z[..., l])
            else:
                poly = (-1.0) ** a * eval_hermitenorm(a, z[..., l])
            out = out * poly * np.exp(-0.5 * z[..., l] ** 2) * self.width ** (-a)
        return out


def _path_simplex(values: np.ndarray, dt: float) -> np.ndarray:
    """Exact simplex integral of piecewise-constant factors, per path.

    ``values`` has shape ``(count, m, cells)``; factor 0 is the outermost.
    """
    count, m, cells = values.shape
    s = np.zeros((count, m + 1))
    s[:, m] = 1.0  # S_{m+1} = 1, S_j = chain f_j..f_m
    fact = [1.0 / math.factorial(r) for r in range(m + 1)]
    for c in range(cells):
        a = values[:, :, c] * dt
        new = s.copy()
        for j in range(m):
            prod = np.ones(count)
            for r in range(1, m - j + 1):
                prod = prod * a[:, j + r - 1]
                new[:, j] += prod * fact[r] * s[:, j + r]
        s = new
    return s[:, 0]


def mc_simplex_expectation(factors: Sequence[BumpFactor], h, d: int, theta: float, t: float,
                           count: int, seed: int = 0, n_steps: int = 256, method: str = "circulant",
                           chunk: int = 4096, workers: int | None = None) -> MCEstimate:
    """``E int_{Delta^m_{theta,t}} prod_j D^{alpha_j} f_j(B^H_{s_j}) ds`` over fBm paths.

    Each path is sampled on ``[0, t]``; each factor is averaged over the two
    nodes of a cell and the per-path simplex integral is exact for the
    resulting step functions.
    """
    m = len(factors)
    if m > MC_MAX_FACTORS:
        raise BudgetError(f"at most {MC_MAX_FACTORS} factors")
    if not 0 <= theta < t:
        raise DomainError("need 0 <= theta < t")
    hp = as_hurst(h)
    grid = TimeGrid(t, n_steps)
    i0 = int(round(theta / grid.dt))
    if not math.isclose(i0 * grid.dt, theta, abs_tol=1e-12):
        raise DomainError("theta must be a grid node of the path grid")
    if m == 0 or all(f.constant for f in factors):
        val = simplex_quadrature([lambda s, f=f: np.full_like(s, f.amp if sum(f.alpha) == 0 else 0.0)
                                  for f in factors], theta, t) if m else 1.0
        return MCEstimate(float(val), 0.0, count)

    def run(lo: int, hi: int):
        b = sample_fbm(method, hp, grid, d, hi - lo, seed, start=lo, workers=1)
        y = b.data[:, i0:, :]
        vals = np.stack([f.evaluate(y) for f in factors], axis=1)  # (count, m, nodes)
        cells = 0.5 * (vals[:, :, 1:] + vals[:, :, :-1])
        return moments(_path_simplex(cells, grid.dt))

    return combine(rng.map_chunks(run, count, chunk=chunk, workers=workers))
