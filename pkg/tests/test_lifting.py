import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import d4_convolution

from liftpolicy.autodiff import UsageError
from liftpolicy.lifting import (
    analysis,
    db2_analysis,
    db2_to_filterbank,
    decomposition_table,
    haar_analysis,
    level_components,
    max_levels,
    merge,
    multilevel_decompose,
    multilevel_reconstruct,
    reconstruction_error,
    split,
    synthesis,
)


def test_d4_oracle_is_orthonormal():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(16)
    low, high = d4_convolution(x)
    assert np.isclose(np.sum(low**2) + np.sum(high**2), np.sum(x**2))


def test_split_merge():
    ev, od = split([1, 2, 3, 4, 5, 6])
    np.testing.assert_array_equal(ev, [1, 3, 5])
    np.testing.assert_array_equal(od, [2, 4, 6])
    np.testing.assert_array_equal(merge(ev, od), [1, 2, 3, 4, 5, 6])


def test_haar_is_pairwise_mean_and_difference():
    p = haar_analysis([4.0, 6.0, 1.0, 1.0])
    np.testing.assert_allclose(p.s, [5.0, 1.0])
    np.testing.assert_allclose(p.d, [2.0, 0.0])


def test_constant_has_no_detail():
    for kind in ("haar", "db2"):
        assert np.allclose(analysis(np.full(8, 3.0), kind).d, 0.0, atol=1e-12)


def test_db2_ramp_detail_vanishes_away_from_wrap():
    d = db2_analysis(np.arange(16.0)).d
    np.testing.assert_allclose(d[1:], 0.0, atol=1e-12)
    assert abs(d[0]) > 1.0


def test_db2_matches_convolution_oracle():
    rng = np.random.default_rng(11)
    for _ in range(50):
        x = rng.standard_normal(16)
        low, high = d4_convolution(x)
        pair = db2_analysis(x)
        np.testing.assert_allclose(pair.s, low, atol=1e-9)
        np.testing.assert_allclose(-np.roll(pair.d, -1), high, atol=1e-9)
        s_fb, d_fb = db2_to_filterbank(pair)
        np.testing.assert_allclose(d_fb, high, atol=1e-9)


@pytest.mark.parametrize("kind", ["haar", "db2"])
def test_reconstruction_small_lengths(kind):
    rng = np.random.default_rng(5)
    for n in (2, 4, 6, 10):
        x = rng.standard_normal(n)
        np.testing.assert_allclose(synthesis(analysis(x, kind), kind), x, atol=1e-12)


def test_odd_length_or_unknown_wavelet_rejected():
    with pytest.raises(UsageError):
        analysis(np.ones(5), "haar")
    with pytest.raises((UsageError, KeyError, ValueError)):
        analysis(np.ones(4), "sym9")


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 64), st.integers(0, 2**31 - 1), st.sampled_from(["haar", "db2"]))
def test_reconstruction_property(half, seed, kind):
    x = np.random.default_rng(seed).standard_normal(2 * half)
    assert reconstruction_error(x, kind) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 200), st.integers(0, 1000), st.sampled_from(["haar", "db2"]))
def test_multilevel_roundtrip_any_length(n, seed, kind):
    x = np.random.default_rng(seed).standard_normal(n)
    levels = min(3, max_levels(n))
    m = multilevel_decompose(x, levels, kind)
    np.testing.assert_allclose(multilevel_reconstruct(m), x, atol=1e-10)
    comps, approx = level_components(m)
    np.testing.assert_allclose(sum(comps) + approx, x, atol=1e-10)


def test_decomposition_table_layout():
    x = np.sin(np.arange(64) / 5.0)
    header, table = decomposition_table(x, 4, "haar")
    assert header == ["time", "original", "f-1", "f-2", "f-3", "f-4", "approx"]
    assert table.shape == (64, 7)
    np.testing.assert_allclose(table[:, 2:].sum(axis=1), x, atol=1e-12)


def test_too_many_levels():
    with pytest.raises(UsageError):
        multilevel_decompose(np.ones(16), 5)
    assert max_levels(16) == 4
