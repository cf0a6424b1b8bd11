import numpy as np
import pytest
from hypothesis import given, strategies as st

from skewflow import rng


def test_streams_are_per_path():
    a = rng.normal_block(7, rng.FBM, 0, 10, 5)
    b = rng.normal_block(7, rng.FBM, 4, 3, 5)
    np.testing.assert_array_equal(a[4:7], b)


@pytest.mark.parametrize("workers", [1, 2, 5])
def test_worker_count_does_not_change_draws(workers):
    ref = rng.normal_block(3, rng.WIENER, 0, 1500, 8, workers=1)
    got = rng.normal_block(3, rng.WIENER, 0, 1500, 8, workers=workers)
    assert np.array_equal(ref, got)


def test_stream_tags_are_independent():
    a = rng.path_normals(1, rng.FBM, 0, 64)
    b = rng.path_normals(1, rng.WIENER, 0, 64)
    assert not np.allclose(a, b)


@given(st.integers(0, 2**63), st.integers(0, 10**6))
def test_uniforms_in_open_unit_interval(seed, path):
    u = rng.path_uniforms(seed, rng.AUX, path, 32)
    assert np.all(u > 0) and np.all(u < 1)


def test_normals_have_unit_moments():
    z = rng.normal_block(11, rng.AUX, 0, 400, 250).ravel()
    assert abs(z.mean()) < 5 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 5 * np.sqrt(2 / z.size)


def test_map_chunks_preserves_order():
    out = rng.map_chunks(lambda lo, hi: (lo, hi), 10, chunk=3, workers=4)
    assert out == [(0, 3), (3, 6), (6, 9), (9, 10)]


def test_env_default_workers(monkeypatch):
    monkeypatch.setenv(rng.WORKERS_ENV, "3")
    assert rng.default_workers() == 3
    monkeypatch.setenv(rng.WORKERS_ENV, "many")
    with pytest.raises(ValueError):
        rng.default_workers()


def test_negative_path_index_rejected():
    with pytest.raises(ValueError):
        rng.path_normals(0, rng.FBM, -1, 4)
