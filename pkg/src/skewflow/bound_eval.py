"""Simplex-integral moment bound, the derivative-series terms and Hurst thresholds.

Everything is evaluated in log space with ``lgamma``; thresholds are exact
``Fraction`` values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DomainError, RegimeError


@dataclass(frozen=True)
class BoundParams:
    """Inputs of the moment bound for ``m`` factors in dimension ``d``.

    ``alpha`` holds one multi-index per factor (length ``d`` each).
    ``gamma=None`` means ``h / 100``.
    """

    h: float
    d: int
    alpha: tuple
    eps_flags: tuple
    theta: float
    t: float
    f_norms: tuple
    gamma: float | None = None
    C: float = 1.0

    def __post_init__(self):
        alpha = tuple(tuple(int(v) for v in a) for a in self.alpha)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "eps_flags", tuple(int(e) for e in self.eps_flags))
        object.__setattr__(self, "f_norms", tuple(float(v) for v in self.f_norms))
        if self.gamma is None:
            object.__setattr__(self, "gamma", self.h / 100.0)
        if not 0.0 < self.h < 0.5:
            raise DomainError(f"the bound needs 0 < h < 1/2, got {self.h}")
        if not 0.0 < self.gamma < self.h:
            raise DomainError(f"need 0 < gamma < h, got gamma={self.gamma}")
        m = len(alpha)
        if m < 1:
            raise ValueError("need at least one factor")
        if any(len(a) != self.d for a in alpha) or any(v < 0 for a in alpha for v in a):
            raise ValueError(f"each multi-index must have {self.d} non-negative entries")
        if len(self.eps_flags) != m or any(e not in (0, 1) for e in self.eps_flags):
            raise ValueError("eps_flags must be m values in {0, 1}")
        if len(self.f_norms) != m or any(v < 0 for v in self.f_norms):
            raise ValueError("f_norms must be m non-negative values")
        if not 0.0 <= self.theta < self.t:
            raise DomainError("need 0 <= theta < t")
        if not self.C > 0:
            raise ValueError("C must be positive")

    @property
    def m(self) -> int:
        return len(self.alpha)

    @property
    def total_order(self) -> int:
        return sum(sum(a) for a in self.alpha)

    @property
    def level_totals(self) -> tuple:
        return tuple(int(v) for v in np.sum(np.array(self.alpha), axis=0))

    @property
    def eps_sum(self) -> int:
        return sum(self.eps_flags)

    def factor_thresholds(self) -> tuple:
        """``(1/2 - gamma) / (d - 1 + 2 |alpha_j|)`` for each factor."""
        return tuple((0.5 - self.gamma) / (self.d - 1 + 2 * sum(a)) if self.d - 1 + 2 * sum(a) > 0 else math.inf
                     for a in self.alpha)

    def violated_hypotheses(self) -> list[str]:
        out = []
        for j, thr in enumerate(self.factor_thresholds()):
            if not self.h < thr:
                out.append(f"factor {j + 1}: h={self.h} >= (1/2-gamma)/(d-1+2|alpha_j|) = {thr:.6g}")
        return out

    @property
    def hypotheses_hold(self) -> bool:
        return not self.violated_hypotheses()

    def gamma_argument(self) -> float:
        h, m, d, a, e = self.h, self.m, self.d, self.total_order, self.eps_sum
        return -h * (2 * m * d + 4 * a) + 2.0 * (h - 0.5 - self.gamma) * e + 2 * m

    def time_exponent(self) -> float:
        h, m, d, a, e = self.h, self.m, self.d, self.total_order, self.eps_sum
        return -h * (m * d + 2 * a) - (h - 0.5 - self.gamma) * e + m


def log_main_estimate_rhs(p: BoundParams) -> float:
    g = p.gamma_argument()
    if not g > 0:
        raise RegimeError(
            f"Gamma argument {g:.6g} <= 0: need 2m + 2(h-1/2-gamma) sum(eps) > h (2md + 4|alpha|)"
        )
    out = (p.m + p.total_order) * math.log(p.C)
    if any(v == 0 for v in p.f_norms):
        return -math.inf
    out += sum(math.log(v) for v in p.f_norms)
    if p.eps_sum:
        if p.theta == 0:
            raise DomainError("theta = 0 with eps flags set makes theta^(H-1/2) infinite")
        out += (p.h - 0.5) * p.eps_sum * math.log(p.theta)
    out += 0.25 * sum(math.lgamma(2 * v + 1) for v in p.level_totals)
    out += p.time_exponent() * math.log(p.t - p.theta)
    out -= 0.5 * math.lgamma(g)
    return out


def main_estimate_rhs(p: BoundParams) -> float:
    """Right-hand side of the simplex moment bound with the caller's constant ``C``."""
    return math.exp(log_main_estimate_rhs(p))


# ---------------------------------------------------------------------------
# series of the higher-order derivative bound


def series_gamma_argument(h: float, d: int, k: int, q: int, m: int) -> float:
    """``-H (2 d 2^q m + 4 * 2^q (m+k-1)) + 2 * 2^q m``."""
    s = 2**q
    return -h * (2 * d * s * m + 4 * s * (m + k - 1)) + 2 * s * m


def log_series_term(h: float, d: int, k: int, q: int, m: int) -> float:
    """``log`` of ``((2 * 2^q (m+k-1))!^(1/4) / Gamma(G)^(1/2))^(1/2^q)``."""
    if m < 1 or k < 1 or q < 0 or d < 1:
        raise ValueError("need m, k, d >= 1 and q >= 0")
    g = series_gamma_argument(h, d, k, q, m)
    if not g > 0:
        raise RegimeError(f"Gamma argument {g:.6g} <= 0 at m={m} (h={h}, d={d}, k={k}, q={q})")
    n = 2**q * (m + k - 1)
    return (0.25 * math.lgamma(2 * n + 1) - 0.5 * math.lgamma(g)) / 2**q


def series_term(h: float, d: int, k: int, q: int, m: int) -> float:
    return math.exp(log_series_term(h, d, k, q, m))


def first_failure_m(h: float, d: int, k: int, m_max: int | None = None) -> int | None:
    """Smallest ``m >= 1`` with a non-positive Gamma argument (closed-form linear solve).

    The argument is ``2^q [m (2 - 2H(d+2)) - 4H(k-1)]``; its sign does not depend on ``q``.
    """
    hf = Fraction(h)
    slope = 2 - 2 * hf * (d + 2)
    icpt = -4 * hf * (k - 1)
    if slope + icpt <= 0:
        m = 1
    elif slope >= 0:
        return None
    else:
        m = math.floor(-icpt / slope) + 1  # first m with m * slope + icpt <= 0
        while m * slope + icpt > 0:
            m += 1
    if m_max is not None and m > m_max:
        return None
    return m


@dataclass(frozen=True)
class ScanRow:
    h: float
    verdict: str  # "decay", "growth" or "regime-failure"
    tail_ratio: float
    threshold: Fraction
    failure_m: int | None = None
    reason: str = ""


def flow_threshold(d: int, k: int) -> Fraction:
    return Fraction(1, 2 * (d - 1 + 2 * k))


def summability_scan(d: int, k: int, q: int, h_grid, m_max: int = 50, gamma: float | None = None,
                     tail: int = 10) -> list[ScanRow]:
    """Classify the series for each ``h``.

    ``regime-failure``: the per-factor hypothesis ``h < (1/2-gamma)/(d-1+2k)``
    of the moment bound fails, or a Gamma argument is non-positive for some
    ``m <= m_max``.  Otherwise ``decay`` if the last ``tail`` log-term
    differences are all negative, else ``growth``.
    """
    if m_max < 20:
        raise ValueError("m_max must be at least 20")
    thr = flow_threshold(d, k)
    rows = []
    for h in h_grid:
        h = float(h)
        g = h / 100.0 if gamma is None else gamma
        hyp = (0.5 - g) / (d - 1 + 2 * k)
        fm = first_failure_m(h, d, k, m_max)
        if fm is not None:
            rows.append(ScanRow(h, "regime-failure", math.nan, thr, fm, f"Gamma argument <= 0 at m={fm}"))
            continue
        logs = np.array([log_series_term(h, d, k, q, m) for m in range(1, m_max + 1)])
        diffs = np.diff(logs)
        ratio = float(math.exp(diffs[-1]))
        if not h < hyp:
            rows.append(ScanRow(h, "regime-failure", ratio, thr, None,
                                f"h >= (1/2-gamma)/(d-1+2k) = {hyp:.6g}"))
            continue
        verdict = "decay" if np.all(diffs[-tail:] < 0) and ratio < 1 else "growth"
        rows.append(ScanRow(h, verdict, ratio, thr))
    return rows


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThresholdTable:
    d: int
    exp_moment: Fraction
    existence: Fraction
    cg_flow: Fraction
    flow: dict = field(default_factory=dict)  # k -> threshold

    def rows(self) -> list[tuple[str, Fraction]]:
        out = [("exp-moment", self.exp_moment), ("existence", self.existence), ("cg-flow", self.cg_flow)]
        out += [(f"flow-k{k}", v) for k, v in sorted(self.flow.items())]
        return out


def hurst_thresholds(d: int, k_max: int = 6) -> ThresholdTable:
    if d < 1:
        raise ValueError("d must be >= 1")
    return ThresholdTable(
        d,
        Fraction(1, 2 * (1 + d)),
        Fraction(1, 2 * (d + 2)),
        Fraction(1, 2 * (d + 3)),
        {k: flow_threshold(d, k) for k in range(1, k_max + 1)},
    )


def verdict_flip_ok(rows: list[ScanRow], spacing: float) -> bool:
    """True iff the verdicts are ``decay`` then ``regime-failure`` with nothing else,
    and the switch brackets the analytic threshold within ``spacing``.
    """
    if not rows:
        return False
    verdicts = [r.verdict for r in rows]
    if "growth" in verdicts or verdicts[0] != "decay" or verdicts[-1] != "regime-failure":
        return False
    i = verdicts.index("regime-failure")
    if any(v != "regime-failure" for v in verdicts[i:]):
        return False
    thr = float(rows[0].threshold)
    last_decay, first_fail = rows[i - 1].h, rows[i].h
    return last_decay < thr <= first_fail + 1e-12 and first_fail - last_decay <= spacing + 1e-12
