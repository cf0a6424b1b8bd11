import numpy as np
import pytest
from hypothesis import given, strategies as st

from skewflow.errors import DomainError, GridMismatchError
from skewflow.fbm import (
    HurstParam,
    PathBatch,
    PathKind,
    TimeGrid,
    circulant_eigenvalues,
    concat_batches,
    covariance_matrix,
    fbm_covariance,
    sample_fbm,
    sample_fbm_cholesky,
    sample_fbm_circulant,
    sample_fbm_volterra,
    sample_wiener,
)

# mpmath (scripts/oracles.py)
R_01_2_1 = 0.5743491774985175
R_03_2_1 = 0.75785828325519904


def test_covariance_against_oracle():
    assert fbm_covariance(0.1, 2.0, 1.0) == pytest.approx(R_01_2_1, rel=1e-14)
    assert fbm_covariance(0.3, 2.0, 1.0) == pytest.approx(R_03_2_1, rel=1e-14)


@given(st.floats(0.02, 0.98), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_covariance_symmetric_and_diagonal(h, t, s):
    assert fbm_covariance(h, t, s) == pytest.approx(fbm_covariance(h, s, t))
    assert fbm_covariance(h, t, t) == pytest.approx(t ** (2 * h))


@given(st.floats(0.05, 0.95), st.integers(2, 40))
def test_covariance_matrix_positive_definite(h, n):
    c = covariance_matrix(h, TimeGrid(1.0, n))
    assert np.linalg.eigvalsh(c).min() > 0


def test_hurst_validation():
    assert HurstParam(0.3).strict_low
    assert not HurstParam(0.5).strict_low
    for bad in (0.0, 1.0, -0.1, 1.3):
        with pytest.raises(DomainError):
            HurstParam(bad)


def test_grid_validation():
    with pytest.raises(DomainError):
        TimeGrid(0.0, 4)
    with pytest.raises(DomainError):
        TimeGrid(1.0, 0)
    g = TimeGrid(2.0, 4)
    np.testing.assert_allclose(g.nodes, [0, 0.5, 1, 1.5, 2])
    np.testing.assert_allclose(g.midpoints, [0.25, 0.75, 1.25, 1.75])


@pytest.mark.parametrize("method", ["cholesky", "circulant", "volterra"])
def test_sampler_shapes_and_origin(method):
    b = sample_fbm(method, 0.3, TimeGrid(1.0, 32), 2, 5, seed=1)
    assert b.data.shape == (5, 33, 2)
    assert np.all(b.data[:, 0] == 0)
    assert b.kind is PathKind.FBM and b.h == 0.3


@pytest.mark.parametrize("method", ["cholesky", "circulant"])
@pytest.mark.parametrize("h", [0.15, 0.4, 0.7])
def test_sampler_covariance(method, h):
    grid = TimeGrid(1.0, 8)
    count = 20_000
    b = sample_fbm(method, h, grid, 1, count, seed=5)
    x = b.data[:, 1:, 0]
    prod = x[:, :, None] * x[:, None, :]
    z = (prod.mean(0) - covariance_matrix(h, grid)) / (prod.std(0, ddof=1) / np.sqrt(count))
    assert np.abs(z).max() < 5


def test_circulant_eigenvalues_nonnegative():
    for h in (0.05, 0.3, 0.5, 0.8, 0.95):
        lam = circulant_eigenvalues(h, 100)
        assert lam.min() >= 0 and lam.size - 1 >= 100


def test_volterra_reduces_to_brownian_sum():
    grid = TimeGrid(1.0, 64)
    w = sample_wiener(grid, 1, 10, seed=2)
    b = sample_fbm_volterra(0.5, grid, w)
    np.testing.assert_array_equal(b.data, w.data)


@pytest.mark.slow
def test_volterra_marginal_variance():
    grid = TimeGrid(1.0, 256)
    w = sample_wiener(grid, 1, 10_000, seed=9)
    b = sample_fbm_volterra(0.2, grid, w)
    v = b.data[:, -1, 0].var()
    assert abs(v - 1.0) < 0.03


def test_volterra_rejects_wrong_input():
    grid = TimeGrid(1.0, 16)
    fb = sample_fbm_circulant(0.3, grid, 1, 3, seed=0)
    with pytest.raises(GridMismatchError):
        sample_fbm_volterra(0.3, grid, fb)
    w = sample_wiener(TimeGrid(1.0, 8), 1, 3, seed=0)
    with pytest.raises(GridMismatchError):
        sample_fbm_volterra(0.3, grid, w)


def test_chunks_concatenate_to_full_batch():
    grid = TimeGrid(1.0, 16)
    full = sample_fbm_cholesky(0.25, grid, 1, 12, seed=4)
    parts = [sample_fbm_cholesky(0.25, grid, 1, 4, seed=4, start=s) for s in (0, 4, 8)]
    np.testing.assert_array_equal(concat_batches(parts).data, full.data)


@pytest.mark.parametrize("method", ["cholesky", "circulant"])
def test_worker_invariance(method):
    grid = TimeGrid(1.0, 64)
    a = sample_fbm(method, 0.2, grid, 2, 1100, seed=8, workers=1)
    b = sample_fbm(method, 0.2, grid, 2, 1100, seed=8, workers=4)
    assert np.array_equal(a.data, b.data)


def test_cholesky_limit():
    with pytest.raises(DomainError):
        sample_fbm_cholesky(0.3, TimeGrid(1.0, 5000), 1, 1, 0)


def test_unknown_method():
    with pytest.raises(ValueError):
        sample_fbm("spectral", 0.3, TimeGrid(1.0, 4), 1, 1, 0)


def test_csv_and_npz_roundtrip(tmp_path):
    b = sample_fbm_circulant(0.3, TimeGrid(2.0, 10), 2, 3, seed=6, start=7)
    b.to_csv(tmp_path / "p.csv")
    c = PathBatch.from_csv(tmp_path / "p.csv")
    assert np.array_equal(b.data, c.data)
    assert c.meta() == b.meta()
    b.save_npz(tmp_path / "p.npz")
    d = PathBatch.load_npz(tmp_path / "p.npz")
    assert np.array_equal(b.data, d.data) and d.meta() == b.meta()
    raw = (tmp_path / "p.csv").read_bytes()
    assert b"\r\n" not in raw and raw.startswith(b"# ")


def test_batch_validation():
    g = TimeGrid(1.0, 4)
    with pytest.raises(ValueError):
        PathBatch(1, g, 0, np.zeros((2, 4, 1)), PathKind.FBM)
    with pytest.raises(ValueError):
        PathBatch(1, g, 0, np.full((2, 5, 1), np.inf), PathKind.FBM)


def test_covariance_examples():
    assert fbm_covariance(0.3, 1.0, 1.0) == pytest.approx(1.0)
    assert fbm_covariance(0.5, 1.0, 2.0) == pytest.approx(1.0)
    assert fbm_covariance(0.25, 1.0, 2.0) == pytest.approx(0.5 * 2**0.5, rel=1e-14)
    with pytest.raises(DomainError):
        fbm_covariance(0.3, -1.0, 1.0)


def test_cholesky_reports_failing_pivot():
    from skewflow.errors import FactorizationError

    # the covariance degenerates to rank one as h -> 1
    with pytest.raises(FactorizationError, match="pivot"):
        sample_fbm_cholesky(1 - 1e-12, TimeGrid(1.0, 256), 1, 1, 0)


def test_brownian_increments_uncorrelated():
    count = 20_000
    b = sample_fbm_cholesky(0.5, TimeGrid(1.0, 8), 1, count, seed=3)
    inc = b.increments()[:, :, 0]
    rho = np.corrcoef(inc[:, 3], inc[:, 4])[0, 1]
    assert abs(rho) < 4 / np.sqrt(count)


def test_circulant_matches_cholesky_in_law():
    from scipy.stats import ks_2samp

    grid = TimeGrid(1.0, 32)
    a = sample_fbm_circulant(0.3, grid, 1, 20_000, seed=1).data[:, -1, 0]
    b = sample_fbm_cholesky(0.3, grid, 1, 20_000, seed=2).data[:, -1, 0]
    assert ks_2samp(a, b).pvalue > 0.01


@pytest.mark.slow
def test_circulant_marginal_variances():
    grid = TimeGrid(1.0, 16)
    count = 50_000
    x = sample_fbm_circulant(0.2, grid, 1, count, seed=4).data[:, 1:, 0]
    v = x.var(0, ddof=1)
    se = v * np.sqrt(2 / (count - 1))
    assert np.all(np.abs(v - grid.nodes[1:] ** 0.4) < 3.5 * se)


def test_self_similarity_stationarity_independence():
    count = 30_000
    b = sample_fbm_circulant(0.3, TimeGrid(2.0, 16), 2, count, seed=6).data
    se = np.sqrt(2 / count)
    # Var B_{2t} = 2^{2H} Var B_t
    assert b[:, 16, 0].var() / b[:, 8, 0].var() == pytest.approx(2**0.6, rel=4 * se * 2)
    # Var(B_{t+d} - B_t) depends on d only
    v1 = (b[:, 3, 0] - b[:, 1, 0]).var()
    v2 = (b[:, 13, 0] - b[:, 11, 0]).var()
    assert abs(v1 / v2 - 1) < 4 * se * 2
    # components independent
    rho = np.corrcoef(b[:, -1, 0], b[:, -1, 1])[0, 1]
    assert abs(rho) < 4 / np.sqrt(count)


def test_volterra_linear_in_noise():
    grid = TimeGrid(1.0, 32)
    w = sample_wiener(grid, 1, 4, seed=0)
    scaled = w.replace_data(2.5 * w.data)
    a = sample_fbm_volterra(0.3, grid, w).data
    b = sample_fbm_volterra(0.3, grid, scaled).data
    np.testing.assert_allclose(b, 2.5 * a, rtol=1e-13, atol=1e-15)
