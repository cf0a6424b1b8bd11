import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from skewflow.bound_eval import (
    BoundParams,
    first_failure_m,
    flow_threshold,
    hurst_thresholds,
    log_series_term,
    main_estimate_rhs,
    series_gamma_argument,
    series_term,
    summability_scan,
    verdict_flip_ok,
)
from skewflow.errors import DomainError, RegimeError

# mpmath (scripts/oracles.py)
INV_SQRT_GAMMA_18 = 1.0361811009813074
SERIES_TERM_01_1_1_1_3 = 1.1769549683186872

H_GRID = np.round(np.arange(0.02, 0.40 + 1e-12, 0.02), 10)


def params(**kw):
    base = dict(h=0.1, d=1, alpha=((0,),), eps_flags=(0,), theta=0.0, t=1.0, f_norms=(1.0,))
    base.update(kw)
    return BoundParams(**base)


def test_single_factor_rhs_against_oracle():
    assert main_estimate_rhs(params()) == pytest.approx(INV_SQRT_GAMMA_18, rel=1e-14)


def test_rhs_scales_with_norms_and_constant():
    p = params(alpha=((1,), (0,)), eps_flags=(0, 0), f_norms=(2.0, 3.0), C=1.5)
    q = params(alpha=((1,), (0,)), eps_flags=(0, 0), f_norms=(1.0, 1.0), C=1.0)
    assert main_estimate_rhs(p) == pytest.approx(6.0 * 1.5**3 * main_estimate_rhs(q), rel=1e-12)
    assert main_estimate_rhs(params(f_norms=(0.0,))) == 0.0


def test_eps_flags_need_positive_theta():
    with pytest.raises(DomainError):
        main_estimate_rhs(params(eps_flags=(1,)))
    v = main_estimate_rhs(params(eps_flags=(1,), theta=0.5))
    assert np.isfinite(v) and v > 0


def test_regime_error_when_gamma_argument_nonpositive():
    p = params(h=0.45, d=3, alpha=((2, 2, 2),), gamma=0.001)
    assert p.gamma_argument() <= 0
    with pytest.raises(RegimeError):
        main_estimate_rhs(p)


def test_hypothesis_violations_are_reported_not_raised():
    p = params(h=0.3, alpha=((1,),))
    assert not p.hypotheses_hold
    assert "factor 1" in p.violated_hypotheses()[0]
    assert params(h=0.1, alpha=((1,),)).hypotheses_hold


def test_param_validation():
    with pytest.raises(DomainError):
        params(h=0.5)
    with pytest.raises(DomainError):
        params(gamma=0.2)
    with pytest.raises(ValueError):
        params(alpha=((0, 0),))
    with pytest.raises(ValueError):
        params(eps_flags=(2,))
    with pytest.raises(DomainError):
        params(theta=1.0)


@given(st.floats(0.01, 0.45), st.integers(1, 3), st.integers(0, 3), st.integers(1, 4))
def test_gamma_argument_linear_in_inputs(h, d, a, m):
    p = BoundParams(h, d, tuple((a,) + (0,) * (d - 1) for _ in range(m)), (0,) * m, 0.0, 1.0, (1.0,) * m)
    assert p.gamma_argument() == pytest.approx(2 * m - h * (2 * m * d + 4 * m * a))
    assert p.time_exponent() == pytest.approx(p.gamma_argument() / 2)


def test_series_term_against_oracle():
    assert series_term(0.1, 1, 1, 1, 3) == pytest.approx(SERIES_TERM_01_1_1_1_3, rel=1e-13)
    assert series_gamma_argument(0.1, 1, 1, 1, 3) == pytest.approx(8.4)


def test_series_regime_error():
    with pytest.raises(RegimeError):
        log_series_term(0.4, 1, 1, 1, 5)
    with pytest.raises(ValueError):
        log_series_term(0.1, 1, 0, 1, 5)


@given(st.fractions(Fraction(1, 100), Fraction(49, 100)), st.integers(1, 3), st.integers(1, 3))
def test_first_failure_is_sign_change(hf, d, k):
    h = float(hf)
    m = first_failure_m(h, d, k, 10_000)
    if m is None:
        assert series_gamma_argument(h, d, k, 0, 10_000) > 0 or 2 - 2 * h * (d + 2) >= 0
    else:
        assert series_gamma_argument(h, d, k, 0, m) <= 1e-12
        if m > 1:
            assert series_gamma_argument(h, d, k, 0, m - 1) > 0


@given(st.integers(0, 3))
def test_verdicts_do_not_depend_on_q(q):
    a = [r.verdict for r in summability_scan(1, 2, 1, H_GRID)]
    b = [r.verdict for r in summability_scan(1, 2, q, H_GRID)]
    assert a == b


@pytest.mark.parametrize("d,k", [(1, 2), (2, 2)])
def test_flip_at_threshold(d, k):
    rows = summability_scan(d, k, 1, H_GRID)
    assert verdict_flip_ok(rows, 0.02)
    thr = float(flow_threshold(d, k))
    assert all(r.verdict == "decay" for r in rows if r.h < thr)


def test_growth_window_for_first_order():
    # below the per-factor bound but above the decay limit of the series
    rows = {round(r.h, 2): r.verdict for r in summability_scan(1, 1, 1, H_GRID)}
    assert rows[0.14] == "decay" and rows[0.2] == "growth" and rows[0.26] == "regime-failure"
    assert not verdict_flip_ok(summability_scan(1, 1, 1, H_GRID), 0.02)


def test_scan_validation():
    with pytest.raises(ValueError):
        summability_scan(1, 1, 1, H_GRID, m_max=5)
    assert not verdict_flip_ok([], 0.02)


def test_threshold_table_exact():
    t = hurst_thresholds(1, 3)
    assert t.flow[1] == Fraction(1, 4)
    assert t.existence == Fraction(1, 6)
    assert t.cg_flow == Fraction(1, 8) == t.flow[2]
    assert t.flow[3] == Fraction(1, 12)
    assert [n for n, _ in t.rows()][:3] == ["exp-moment", "existence", "cg-flow"]
    with pytest.raises(ValueError):
        hurst_thresholds(0)


@given(st.integers(1, 6), st.integers(1, 6))
def test_thresholds_decrease_in_order(d, k):
    assert flow_threshold(d, k + 1) < flow_threshold(d, k)
    assert flow_threshold(d + 1, k) < flow_threshold(d, k)
