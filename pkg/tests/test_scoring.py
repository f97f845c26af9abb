import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from advrecon.errors import ConfigError, CoverageError, ScoringError
from advrecon.scoring import (
    ErrorConfig,
    FusionConfig,
    aggregate_reconstructions,
    collect,
    dtw_local,
    error_area,
    error_dtw,
    error_pointwise,
    fuse,
    reconstruction_error,
    smooth_critic,
    zscore,
)

from oracles import dtw_brute, kde_mode, piecewise_linear_integral

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


# --- collections / median ------------------------------------------------


def test_median_odd():
    assert aggregate_reconstructions([[1, 2, 9]])[0] == 2


def test_lower_median_even():
    assert aggregate_reconstructions([[1, 3]])[0] == 1
    assert aggregate_reconstructions([[3, 1]])[0] == 1


def test_single_window_verbatim():
    recon = np.array([[[0.5], [0.25], [-0.75]]])
    coll = collect(recon, [0], 3)
    np.testing.assert_array_equal(aggregate_reconstructions(coll), recon[0])


def test_uncovered_step():
    with pytest.raises(CoverageError):
        aggregate_reconstructions([[1.0], []])
    coll = collect(np.ones((1, 2)), [0], 3)
    with pytest.raises(CoverageError):
        aggregate_reconstructions(coll)


def test_collect_counts_with_unit_step():
    T, t = 12, 4
    starts = np.arange(T - t + 1)
    coll = collect(np.ones((len(starts), t)), starts, T)
    counts = (~np.isnan(coll)).sum(axis=1)
    assert counts[t - 1:T - t + 1].tolist() == [t] * (T - 2 * t + 2)
    assert counts.min() == 1 and counts.max() == t


def test_collect_places_values_by_offset():
    vals = np.arange(6.0).reshape(2, 3)
    coll = collect(vals, [0, 1], 4)
    # step 1 receives offset 1 of window 0 and offset 0 of window 1
    assert sorted(coll[1][~np.isnan(coll[1])].tolist()) == [1.0, 3.0]


@given(st.lists(st.lists(finite, min_size=1, max_size=9), min_size=1, max_size=10), st.randoms())
def test_median_is_permutation_invariant(rows, rnd):
    shuffled = []
    for r in rows:
        r = list(r)
        rnd.shuffle(r)
        shuffled.append(r)
    np.testing.assert_array_equal(aggregate_reconstructions(rows), aggregate_reconstructions(shuffled))


# --- point-wise ----------------------------------------------------------


def test_pointwise_examples():
    np.testing.assert_array_equal(error_pointwise([1, 2], [1, 2]), [0, 0])
    assert error_pointwise([3.0], [5.0])[0] == 2


@given(arrays(float, 20, elements=finite), arrays(float, 20, elements=finite), st.floats(0.01, 50))
def test_pointwise_homogeneous(x, y, c):
    np.testing.assert_allclose(error_pointwise(c * x, c * y), c * error_pointwise(x, y), rtol=1e-12, atol=1e-9)


# --- area ----------------------------------------------------------------


def test_area_constant_difference():
    d = 0.3
    x = np.zeros(50)
    s = error_area(x + d, x, l=5)
    np.testing.assert_allclose(s[5:45], d, rtol=1e-12)
    # truncated edges are normalised by their own length
    np.testing.assert_allclose(s, d, rtol=1e-12)


def test_area_alternating_cancels():
    d = np.array([(-1.0) ** i for i in range(40)])
    s = error_area(d, np.zeros(40), l=4)
    np.testing.assert_allclose(s[4:36], 0.0, atol=1e-12)


def test_area_invalid_half_window():
    with pytest.raises(ConfigError):
        error_area(np.zeros(10), np.zeros(10), l=5)


@pytest.mark.parametrize("trial", range(50))
def test_area_matches_analytic_integral(trial):
    rng = np.random.default_rng(1000 + trial)
    T = int(rng.integers(15, 60))
    l = int(rng.integers(1, (T - 1) // 2 + 1))
    inner = np.sort(rng.choice(np.arange(1, T - 1), size=int(rng.integers(0, 6)), replace=False))
    knots_x = np.concatenate([[0], inner, [T - 1]]).astype(float)
    knots_y = rng.normal(0, 5, len(knots_x))
    d = np.interp(np.arange(T), knots_x, knots_y)
    offset = rng.normal(0, 3, T)
    s = error_area(d + offset, offset, l)
    for t in range(T):
        lo, hi = max(0, t - l), min(T - 1, t + l)
        want = abs(piecewise_linear_integral(knots_x, knots_y, lo, hi)) / (hi - lo)
        assert abs(s[t] - want) <= 1e-9


# --- dtw -----------------------------------------------------------------


def test_dtw_identity_zero():
    x = np.sin(np.linspace(0, 6, 40))
    np.testing.assert_array_equal(error_dtw(x, x, l=5), 0.0)


def test_dtw_small_example_matches_brute_force():
    a = np.array([[0.0, 0.0, 1.0]])
    b = np.array([[0.0, 1.0, 1.0]])
    assert dtw_local(a, b)[0] == dtw_brute(a[0], b[0])
    # a path exists that pairs 0-0, 0-0, 1-1, 1-1 at zero cost
    assert dtw_local(a, b)[0] == 0.0


@pytest.mark.parametrize("trial", range(100))
def test_dtw_matches_exhaustive_paths(trial):
    rng = np.random.default_rng(trial)
    n = int(rng.integers(1, 7))
    m = int(rng.integers(1, 7)) if trial % 2 else n
    a = rng.normal(size=n)
    b = rng.normal(size=m)
    assert dtw_local(a[None], b[None])[0] == dtw_brute(a, b)


def test_dtw_batch_agrees_with_single():
    rng = np.random.default_rng(5)
    A = rng.normal(size=(7, 5))
    B = rng.normal(size=(7, 5))
    batch = dtw_local(A, B)
    for i in range(7):
        assert batch[i] == dtw_local(A[i:i + 1], B[i:i + 1])[0]


def test_dtw_shift_tolerance():
    # the same pulse shifted by two steps: warping absorbs the shift
    T, l, centre = 60, 8, 30
    x = np.zeros(T)
    x_hat = np.zeros(T)
    x[centre:centre + 4] = 1.0
    x_hat[centre + 2:centre + 6] = 1.0
    lo, hi = centre - l, centre + l
    dtw_score = error_dtw(x, x_hat, l)[centre]
    point_mean = error_pointwise(x, x_hat)[lo:hi].mean()
    assert dtw_score < point_mean


def test_dtw_edge_segments_truncated():
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=30), rng.normal(size=30)
    s = error_dtw(x, y, l=3)
    assert s[0] == dtw_brute(x[0:3], y[0:3])
    assert s[29] == dtw_brute(x[26:30], y[26:30])
    assert s[10] == dtw_brute(x[7:13], y[7:13])


@pytest.mark.parametrize("method", ["point", "area", "dtw"])
def test_all_errors_zero_on_perfect_reconstruction(method):
    x = np.cos(np.arange(50) / 3.0)
    np.testing.assert_array_equal(reconstruction_error(x, x, ErrorConfig(method, 4)), 0.0)


def test_multichannel_errors():
    x = np.zeros((30, 2))
    y = np.zeros((30, 2))
    y[:, 0] = 3.0
    y[:, 1] = 4.0
    np.testing.assert_allclose(error_pointwise(x, y), 5.0)
    np.testing.assert_allclose(error_area(x, y, 3), 5.0)


# --- critic smoothing ----------------------------------------------------


def test_smooth_constant_and_singleton():
    assert smooth_critic([[5, 5, 5], [2.5]]).tolist() == [5, 2.5]


def test_smooth_suppresses_outlier():
    assert smooth_critic([[1, 1, 1, 10]])[0] == 1
    assert kde_mode([1, 1, 1, 10]) == 1


@settings(max_examples=40)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=12))
def test_smooth_matches_reference_kde(vals):
    v = np.asarray(vals)
    if np.ptp(v) < 1e-3:
        return
    # densities within float noise of each other can pick either sample;
    # only compare when the reference maximum is unambiguous
    got = smooth_critic([vals])[0]
    want = kde_mode(vals)
    assert got in vals
    if got != want:
        n = len(v)
        h = v.std(ddof=1) * n ** -0.2
        dens = lambda x: np.exp(-0.5 * ((x - v) / h) ** 2).sum()
        assert abs(dens(got) - dens(want)) <= 1e-9 * dens(want)


def test_smooth_alternatives():
    assert smooth_critic([[1, 2, 9]], "max")[0] == 9
    assert smooth_critic([[1, 2, 9, 4]], "median")[0] == 2
    with pytest.raises(ConfigError):
        smooth_critic([[1.0]], "mean")


# --- z-scores and fusion -------------------------------------------------


def test_zscore_high():
    z = zscore([0, 0, 10, 0, 0])
    assert int(np.argmax(z)) == 2
    assert abs(z.mean()) <= 1e-12


def test_zscore_low_direction():
    z = zscore([1, 1, -5, 1], "low_is_anomalous")
    assert int(np.argmax(z)) == 2


def test_zscore_constant():
    with pytest.raises(ScoringError):
        zscore([2.0, 2.0, 2.0])


@given(arrays(float, st.integers(2, 60), elements=finite))
def test_zscore_moments(v):
    if v.std() < 1e-6:
        return
    z = zscore(v)
    assert abs(z.mean()) <= 1e-9
    assert abs(z.std() - 1) <= 1e-9


def test_fuse_examples():
    assert fuse([2.0], [4.0], FusionConfig("convex", 0.5))[0] == 3
    assert fuse([2.0], [4.0], FusionConfig("product", product_scale=1.0))[0] == 8
    z_re = np.array([1.5, -0.25, 3.0])
    np.testing.assert_array_equal(fuse(z_re, [9, 9, 9], FusionConfig("convex", 1.0)), z_re)
    np.testing.assert_array_equal(fuse(z_re, [9, 8, 7], FusionConfig("critic_only")), [9, 8, 7])
    np.testing.assert_array_equal(fuse(z_re, [9, 8, 7], FusionConfig("error_only")), z_re)


def test_fuse_length_mismatch():
    with pytest.raises(ScoringError):
        fuse([1.0, 2.0], [1.0])


@given(arrays(float, 30, elements=finite), arrays(float, 30, elements=finite), st.floats(0, 1))
def test_convex_argmax_symmetry(a, b, alpha):
    one = fuse(a, b, FusionConfig("convex", alpha))
    two = fuse(b, a, FusionConfig("convex", 1 - alpha))
    np.testing.assert_allclose(one, two, rtol=1e-12, atol=1e-9)
    top = np.flatnonzero(one >= one.max() - 1e-9)
    assert int(np.argmax(two)) in top
