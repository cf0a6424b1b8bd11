import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from skewflow.errors import BudgetError, DomainError
from skewflow.shuffle_algebra import (
    BumpFactor,
    DerivativeLedger,
    enumerate_shuffles,
    mc_simplex_expectation,
    partial_shuffle_expand,
    partial_shuffle_lhs,
    simplex_quadrature,
    total_derivative_order,
    verify_partial_shuffle,
    verify_shuffle_identity,
)

# mpmath nested quadrature (scripts/oracles.py)
SIMPLEX_COS_S_EXP = 0.078226527754283847
ODD_BUMP_MEAN = 0.30503262262693172  # h=0.3, center 0.3, width 0.5, first derivative, t=1


def polys(seed, count, deg=3):
    rng = np.random.default_rng(seed)
    return [np.polynomial.Polynomial(rng.normal(size=deg + 1)) for _ in range(count)]


@pytest.mark.parametrize("m,n,expected", [(1, 1, 2), (2, 1, 3), (2, 2, 6), (0, 3, 1)])
def test_small_cardinalities(m, n, expected):
    assert len(enumerate_shuffles(m, n)) == expected


@given(st.integers(0, 8).flatmap(lambda t: st.tuples(st.just(t), st.integers(0, t))))
def test_cardinality_is_binomial(tm):
    tot, m = tm
    s = enumerate_shuffles(m, tot - m)
    assert len(s) == math.comb(tot, m)
    for sigma in s.permutations:
        assert sorted(sigma) == list(range(1, tot + 1))
        assert list(sigma[:m]) == sorted(sigma[:m]) and list(sigma[m:]) == sorted(sigma[m:])
        order = s.merged_order(sigma)
        assert all(sigma[order[p]] == p + 1 for p in range(tot))


def test_budget():
    with pytest.raises(BudgetError):
        enumerate_shuffles(7, 6)


def test_simplex_quadrature_against_oracle():
    got = simplex_quadrature([np.cos, lambda s: s, np.exp], 0.0, 1.0)
    assert got == pytest.approx(SIMPLEX_COS_S_EXP, rel=1e-13)
    assert simplex_quadrature([lambda s: s, lambda s: s], 0.0, 1.0) == pytest.approx(0.125, rel=1e-14)


@given(st.integers(1, 5), st.floats(0.0, 1.0), st.floats(0.1, 2.0))
def test_constant_simplex_volume(m, theta, span):
    got = simplex_quadrature([lambda s: np.ones_like(s)] * m, theta, theta + span)
    assert got == pytest.approx(span**m / math.factorial(m), rel=1e-12)


def test_simplex_mc_agrees_with_quadrature():
    fs = [np.cos, lambda s: s, np.exp]
    est = simplex_quadrature(fs, 0.0, 1.0, method="mc", count=200_000, seed=2024)
    assert est.within(SIMPLEX_COS_S_EXP, 4.0)


def test_simplex_validation():
    with pytest.raises(DomainError):
        simplex_quadrature([np.cos], 1.0, 0.5)
    with pytest.raises(BudgetError):
        simplex_quadrature([np.cos] * 7, 0.0, 1.0)
    with pytest.raises(ValueError):
        simplex_quadrature([np.cos], 0.0, 1.0, method="sobol")


@pytest.mark.parametrize("m,n", [(1, 1), (1, 2), (2, 2), (2, 3), (1, 4)])
def test_shuffle_identity(m, n):
    fs, gs = polys(m * 10 + n, m), polys(m * 10 + n + 100, n)
    r = verify_shuffle_identity(fs, gs, 0.2, 1.3)
    assert r.residual < 1e-10 and r.terms == math.comb(m + n, m)


def test_shuffle_needs_inverse_permutation():
    # with sigma instead of sigma^{-1} the (2,2) sum changes for generic factors
    from skewflow.shuffle_algebra import _running_chain

    fs, gs = polys(1, 2), polys(2, 2)
    s = enumerate_shuffles(2, 2)
    comb = fs + gs
    wrong = sum(float(_running_chain([comb[p - 1] for p in sig], 0.0, 1.0, 64)(1.0)) for sig in s.permutations)
    right = verify_shuffle_identity(fs, gs, 0.0, 1.0)
    assert abs(wrong - right.lhs) > 1e-3 * abs(right.lhs)


@pytest.mark.parametrize("n,p", [(1, 1), (2, 1), (2, 2), (3, 2)])
def test_partial_shuffle(n, p):
    fs, gs = polys(n + 7 * p, n), polys(n + 7 * p + 50, p)
    for k in range(n + 1):
        r = verify_partial_shuffle(fs, gs, k, 0.1, 1.0)
        assert r.residual < 1e-10


def test_partial_shuffle_edge_cases():
    fs, gs = polys(0, 2), polys(1, 2)
    assert len(partial_shuffle_expand(fs, gs, 0)) == 0
    assert partial_shuffle_lhs(fs, gs, 0, 0.0, 1.0) == 0.0
    full = partial_shuffle_expand(fs, gs, 1)
    assert len(full) == math.comb(3, 2)  # g-block shuffles with f_2 only
    assert len(partial_shuffle_expand(fs, [], 1)) == 1
    with pytest.raises(ValueError):
        partial_shuffle_expand(fs, gs, 3)


def test_partial_shuffle_k_equal_n_is_full_shuffle_below_last():
    fs, gs = polys(3, 3), polys(4, 2)
    exp = partial_shuffle_expand(fs, gs, 3)
    assert len(exp) == 1  # g-block sits strictly below s_3
    assert exp.sequences[0] == tuple(("f", j) for j in range(3)) + (("g", 0), ("g", 1))


def test_ledger_bookkeeping():
    f = DerivativeLedger(((1, 0), (0, 2)))
    g = DerivativeLedger(((1, 1),))
    assert total_derivative_order(f, g) == 5
    assert (f + g).level_totals() == (2, 3)
    assert f.permuted([1, 0]).indices == ((0, 2), (1, 0))
    exp = partial_shuffle_expand([np.cos, np.sin], [np.exp], 1, f, g)
    assert set(exp.totals()) == {5}
    for seq, led in zip(exp.sequences, exp.ledgers):
        assert led.total == 5 and len(led.indices) == len(seq)
    with pytest.raises(ValueError):
        DerivativeLedger(((1,), (0, 1)))
    with pytest.raises(ValueError):
        DerivativeLedger(((-1,),))


@given(st.integers(0, 4), st.floats(-2, 2), st.floats(0.3, 2.0), st.booleans())
def test_bump_derivatives(a, c, w, odd):
    f = BumpFactor((a,), c, w, 1.5, odd)
    df = BumpFactor((a + 1,), c, w, 1.5, odd)
    y = np.linspace(-3, 3, 41)[:, None]
    step = 1e-5
    fd = (f.evaluate(y + step) - f.evaluate(y - step)) / (2 * step)
    np.testing.assert_allclose(df.evaluate(y), fd, rtol=1e-5, atol=1e-6 * w ** -(a + 2))


def test_constant_factor_shortcut():
    est = mc_simplex_expectation([BumpFactor((0,), constant=True, amp=2.0)] * 2, 0.3, 1, 0.0, 1.0, 10)
    assert est.value == pytest.approx(2.0, rel=1e-12) and est.stderr == 0.0


@pytest.mark.slow
def test_mc_simplex_against_gaussian_oracle():
    f = BumpFactor((1,), 0.3, 0.5, 1.0, odd=True)
    est = mc_simplex_expectation([f], 0.3, 1, 0.0, 1.0, 20_000, seed=7, n_steps=256)
    assert est.within(ODD_BUMP_MEAN, 4.0)


def test_mc_simplex_validation():
    f = BumpFactor((0,))
    with pytest.raises(BudgetError):
        mc_simplex_expectation([f] * 5, 0.3, 1, 0.0, 1.0, 10)
    with pytest.raises(DomainError):
        mc_simplex_expectation([f], 0.3, 1, 0.3333, 1.0, 10, n_steps=16)


def test_elementary_simplex_integral():
    got = simplex_quadrature([lambda s: s, lambda s: np.ones_like(s)], 0.0, 1.0)
    assert got == pytest.approx(1.0 / 3.0, rel=1e-14)


@pytest.mark.parametrize("m,n", [(1, 2), (2, 3), (3, 3)])
def test_constant_factors_reduce_to_counting(m, n):
    one = lambda s: np.ones_like(s)  # noqa: E731
    r = verify_shuffle_identity([one] * m, [one] * n, 0.0, 1.5)
    assert r.rhs == pytest.approx(math.comb(m + n, m) * 1.5 ** (m + n) / math.factorial(m + n), rel=1e-12)
    assert r.residual < 1e-12


def test_trigonometric_battery():
    fs = [np.sin, np.cos]
    gs = [lambda s: np.cos(2 * s), lambda s: np.sin(3 * s) + 1, lambda s: np.cos(s) ** 2]
    assert verify_shuffle_identity(fs, gs, 0.0, 1.0).residual < 1e-8


def test_ledger_totals_examples():
    f = DerivativeLedger(((1,), (1,), (1,)))
    assert total_derivative_order(f, DerivativeLedger(())) == 3
    assert total_derivative_order(f, DerivativeLedger(((1,), (1,)))) == 5


def test_constant_unit_factors_give_volume():
    one = BumpFactor((0,), constant=True)
    est = mc_simplex_expectation([one] * 3, 0.3, 1, 0.0, 2.0, 10)
    assert est.value == pytest.approx(8.0 / 6.0, rel=1e-12)
