import math

import numpy as np
import pytest

from skewflow.errors import GridMismatchError
from skewflow.fbm import TimeGrid, sample_fbm_circulant, sample_wiener
from skewflow.frac_calc import SampledFunction
from skewflow.girsanov import (
    DriftSpec,
    exp_moment_probe,
    girsanov_exponent,
    girsanov_mean,
    girsanov_weight,
    occupation_energy,
)


def const(grid, c):
    return SampledFunction(0.0, grid.t_end, np.full(grid.n_steps + 1, c))


def test_brownian_constant_drift_matches_classical_density():
    grid = TimeGrid(2.0, 128)
    w = sample_wiener(grid, 1, 500, seed=4)
    c = -0.8
    xi = girsanov_weight(0.5, [const(grid, c)], w)
    classic = np.exp(-c * w.data[:, -1, 0] - 0.5 * c * c * grid.t_end)
    np.testing.assert_allclose(xi, classic, rtol=1e-10)


def test_zero_drift_gives_unit_weight():
    grid = TimeGrid(1.0, 64)
    w = sample_wiener(grid, 2, 20, seed=0)
    xi = girsanov_weight(0.3, [const(grid, 0.0), const(grid, 0.0)], w)
    assert np.all(xi == 1.0)


def test_array_drift_forms_agree():
    grid = TimeGrid(1.0, 64)
    w = sample_wiener(grid, 1, 7, seed=1)
    u = np.sin(grid.nodes)[:, None]
    a = girsanov_exponent(0.3, [SampledFunction(0.0, 1.0, u[:, 0])], w)
    b = girsanov_exponent(0.3, u, w)
    c = girsanov_exponent(0.3, np.broadcast_to(u, (7,) + u.shape), w)
    np.testing.assert_allclose(a, b)
    np.testing.assert_allclose(a, c)


def test_drift_validation():
    grid = TimeGrid(1.0, 16)
    w = sample_wiener(grid, 1, 3, seed=1)
    with pytest.raises(GridMismatchError):
        girsanov_weight(0.3, [const(TimeGrid(1.0, 8), 1.0)], w)
    with pytest.raises(GridMismatchError):
        girsanov_weight(0.3, [const(grid, 1.0)] * 2, w)
    fb = sample_fbm_circulant(0.3, grid, 1, 3, seed=1)
    with pytest.raises(GridMismatchError):
        girsanov_weight(0.3, [const(grid, 1.0)], fb)


def test_overflow_is_reported():
    # adapted drift aligned against the increments: exponent ~ c sum|dW| - c^2/2
    grid = TimeGrid(1.0, 10_000)
    w = sample_wiener(grid, 1, 2, seed=1)
    u = np.zeros((2, grid.n_steps + 1, 1))
    u[:, :-1, 0] = -80.0 * np.sign(w.increments()[:, :, 0])
    with pytest.raises(FloatingPointError):
        girsanov_weight(0.5, u, w)


@pytest.mark.slow
def test_mean_density_is_one():
    grid = TimeGrid(1.0, 128)
    u = [SampledFunction(0.0, 1.0, 0.7 * (np.sin(2 * np.pi * grid.nodes) + 0.5))]
    est = girsanov_mean(0.3, u, grid, 1, 30_000, seed=2024)
    assert est.within(1.0, 4.0)


def test_drift_spec_is_callable():
    b = DriftSpec(lambda t, y: 2 * y, "double")
    np.testing.assert_array_equal(b(0.0, np.ones(3)), 2 * np.ones(3))


def test_probe_k_zero_is_exactly_one():
    p = exp_moment_probe(0.2, 1, 0.0, 0.5, 0.0, 100, TimeGrid(1.0, 32))
    assert p.estimate == 1.0 and p.stderr == 0.0 and p.censored_fraction == 0.0


def test_probe_increases_in_k_and_is_finite():
    grid = TimeGrid(1.0, 64)
    vals = [exp_moment_probe(0.2, 1, k, 0.5, 0.0, 2000, grid, seed=3).estimate for k in (0.25, 0.5, 1.0)]
    assert vals[0] > 1.0 and vals[0] < vals[1] < vals[2] < 2.0


def test_occupation_energy_nonnegative():
    grid = TimeGrid(1.0, 64)
    b = sample_fbm_circulant(0.2, grid, 2, 50, seed=0)
    e = occupation_energy(0.2, b, (0.0, 0.0), 0.25)
    assert e.shape == (50,) and np.all(e >= 0)


def test_weight_continuous_in_amplitude():
    grid = TimeGrid(1.0, 64)
    w = sample_wiener(grid, 1, 50, seed=3)
    devs = [np.max(np.abs(girsanov_weight(0.3, [SampledFunction(0.0, 1.0, a * np.cos(grid.nodes))], w) - 1))
            for a in (1e-1, 1e-2, 1e-3)]
    assert devs[0] > devs[1] > devs[2] and devs[2] < 1e-2


def test_probe_censoring_is_reported():
    p = exp_moment_probe(0.2, 1, 1e4, 0.01, 0.0, 200, TimeGrid(1.0, 32), seed=1)
    assert 0.0 < p.censored_fraction <= 1.0
    assert np.isfinite(p.estimate)
