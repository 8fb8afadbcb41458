import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.exceptions import (
    CapacityError, ConfigurationError, ContractError, DimensionError, EstimatorUndefinedError
)
from src.modules.module_a import ModuleA
from src.modules.module_a.disco import (
    LocalStatistics,
    bandwidth_for_n,
    default_m,
    disco_m,
    local_center_naive,
    local_dcov_expansion,
    local_dcov_naive,
    local_statistics_naive,
    naive_broadcast_dcor,
    penalty,
    rbf_weights,
    sample_reference_rows,
    sdisco,
    sdisco_components,
    uniform_weights,
)
from src.modules.module_a.distance import dcor2, dcov2, median_heuristic, pairwise_distance
from src.utils.allocation import AllocationTracker
from src.utils.matrix_engine import finite_diff_check
from src.utils.rng import stream


def _inputs(n, seed, dim=2):
    gen = stream(seed, "disco_inputs", n)
    predictions = gen.normal(size=(n, dim))
    bias = gen.normal(size=(n, 1))
    condition = gen.normal(size=(n, 1))
    W = rbf_weights(condition, median_heuristic(condition))
    return pairwise_distance(predictions), pairwise_distance(bias), W


def test_rbf_weights_are_row_stochastic(rng):
    W = rbf_weights(rng.normal(size=(30, 2)), 0.7)
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(W >= 0)


@pytest.mark.parametrize("bandwidth", [0.0, -1.0, float("inf")])
def test_rbf_weights_reject_bad_bandwidth(bandwidth):
    with pytest.raises(ConfigurationError):
        rbf_weights(np.zeros((4, 1)), bandwidth)


def test_tiny_bandwidth_keeps_rows_normalized():
    W = rbf_weights(np.arange(5.0).reshape(-1, 1), 1e-6)
    np.testing.assert_allclose(W, np.eye(5), atol=1e-300)
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)


def test_far_apart_conditions_keep_positive_weights():
    W = rbf_weights([[0.0], [1.0], [50.0]], 0.01)
    assert np.all(W > 0)
    assert np.all(W <= 1.0)
    assert np.all(np.diag(W) == W.max(axis=1))


def test_bandwidth_and_m_helpers():
    assert bandwidth_for_n(1.0, 32) == pytest.approx(0.5)
    assert default_m(100) == 20
    assert default_m(3) == 1
    with pytest.raises(ConfigurationError):
        sample_reference_rows(10, 11, seed=0)


def test_local_centering_rejects_unnormalized_weights(rng):
    A = pairwise_distance(rng.normal(size=(4, 1)))
    with pytest.raises(ContractError):
        local_center_naive(A, np.full(4, 0.3))
    with pytest.raises(DimensionError):
        local_center_naive(A, np.full(3, 1.0 / 3.0))


def test_local_centering_has_zero_weighted_margins(rng):
    A = pairwise_distance(rng.normal(size=(9, 2)))
    w = rng.dirichlet(np.ones(9))
    a = local_center_naive(A, w)
    np.testing.assert_allclose(w @ a, 0.0, atol=1e-12)
    np.testing.assert_allclose(a @ w, 0.0, atol=1e-12)


def test_uniform_local_dcov_is_dcov2(rng):
    A = pairwise_distance(rng.normal(size=(15, 2)))
    B = pairwise_distance(rng.normal(size=(15, 1)))
    w = np.full(15, 1.0 / 15.0)
    assert local_dcov_naive(A, B, w) == pytest.approx(dcov2(A, B), abs=1e-12)


@pytest.mark.parametrize("n", [4, 8, 16])
def test_expansion_matches_naive_centering(n):
    A, B, W = _inputs(n, seed=n)
    for i in range(n):
        assert local_dcov_expansion(A, B, W[i]) == pytest.approx(local_dcov_naive(A, B, W[i]), abs=1e-10)


def test_expansion_matches_naive_centering_sampled_rows():
    A, B, W = _inputs(128, seed=5)
    for i in (0, 63, 127):
        assert local_dcov_expansion(A, B, W[i]) == pytest.approx(local_dcov_naive(A, B, W[i]), abs=1e-10)


@pytest.mark.slow
def test_fast_statistics_match_expansion_over_many_instances():
    for instance in range(200):
        n = (4, 8, 32, 128)[instance % 4]
        gen = stream(instance, "expansion_sweep")
        predictions = gen.normal(size=(n, int(gen.integers(1, 4))))
        bias = gen.normal(size=(n, int(gen.integers(1, 3))))
        condition = gen.normal(size=(n, 1))
        W = rbf_weights(condition, median_heuristic(condition) * gen.uniform(0.1, 2.0))
        A, B = pairwise_distance(predictions), pairwise_distance(bias)
        fast = sdisco_components(A, B, W)
        rows = range(n) if n <= 32 else gen.choice(n, size=8, replace=False)
        for i in rows:
            assert fast.v_xy[i] == pytest.approx(local_dcov_naive(A, B, W[i]), abs=1e-10)
            assert fast.v_xy[i] == pytest.approx(local_dcov_expansion(A, B, W[i]), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.sampled_from([4, 8, 32, 128]))
def test_sdisco_components_match_naive_rows(seed, n):
    A, B, W = _inputs(n, seed)
    fast = sdisco_components(A, B, W)
    naive = local_statistics_naive(A, B, W)
    np.testing.assert_allclose(fast.v_xy, naive.v_xy, atol=1e-10)
    np.testing.assert_allclose(fast.v_xx, naive.v_xx, atol=1e-10)
    np.testing.assert_allclose(fast.v_yy, naive.v_yy, atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.sampled_from([4, 16, 64]))
def test_sdisco_with_uniform_weights_is_dcor2(seed, n):
    A, B, _ = _inputs(n, seed)
    assert sdisco(A, B, uniform_weights(n)) == pytest.approx(dcor2(A, B), abs=1e-10)


def _points(n, seed):
    gen = stream(seed, "sdisco_points", n)
    return gen.normal(size=(n, 2)), gen.normal(size=(n, 1)), gen.normal(size=(n, 1))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.sampled_from([5, 16, 48]))
def test_sdisco_is_symmetric(seed, n):
    A, B, W = _inputs(n, seed)
    assert sdisco(A, B, W) == pytest.approx(sdisco(B, A, W), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.sampled_from([5, 16, 48]),
       scale=st.floats(0.1, 100.0, allow_nan=False, allow_infinity=False))
def test_sdisco_ignores_prediction_scale(seed, n, scale):
    predictions, bias, condition = _points(n, seed)
    W = rbf_weights(condition, 0.7)
    B = pairwise_distance(bias)
    reference = sdisco(pairwise_distance(predictions), B, W)
    assert sdisco(pairwise_distance(scale * predictions), B, W) == pytest.approx(reference, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.sampled_from([5, 16, 48]))
def test_sdisco_is_permutation_equivariant(seed, n):
    predictions, bias, condition = _points(n, seed)
    perm = stream(seed, "permutation").permutation(n)
    before = sdisco(pairwise_distance(predictions), pairwise_distance(bias), rbf_weights(condition, 0.7))
    after = sdisco(
        pairwise_distance(predictions[perm]), pairwise_distance(bias[perm]), rbf_weights(condition[perm], 0.7)
    )
    assert after == pytest.approx(before, abs=1e-12)


def test_sdisco_matches_broadcast_estimator():
    A, B, W = _inputs(16, seed=3)
    assert sdisco(A, B, W) == pytest.approx(naive_broadcast_dcor(A, B, W), abs=1e-10)


def test_broadcast_estimator_refuses_large_n():
    n = 257
    with pytest.raises(CapacityError):
        naive_broadcast_dcor(np.zeros((n, n)), np.zeros((n, n)), uniform_weights(n))


def test_sdisco_rejects_mismatched_inputs():
    A, B, W = _inputs(8, seed=0)
    with pytest.raises(DimensionError):
        sdisco(A, B[:4, :4], W)
    with pytest.raises(DimensionError):
        sdisco(A, B, W[:, :4])


def test_zero_over_zero_is_zero():
    stats = LocalStatistics.from_raw([0.0, 0.5], [0.0, 1.0], [1.0, 1.0])
    np.testing.assert_array_equal(stats.ratios(), [0.0, 0.5])
    assert stats.estimate() == 0.25


def test_constant_predictions_give_zero():
    _, B, W = _inputs(10, seed=1)
    assert sdisco(np.zeros((10, 10)), B, W) == 0.0


def test_disco_m_with_all_rows_equals_naive_estimate():
    A, B, W = _inputs(24, seed=7)
    full = local_statistics_naive(A, B, W).estimate()
    assert disco_m(A, B, W, m=24, seed=11) == pytest.approx(full, abs=1e-12)


def test_disco_m_is_reproducible():
    A, B, W = _inputs(40, seed=2)
    assert disco_m(A, B, W, seed=5) == disco_m(A, B, W, seed=5)


def test_sdisco_allocation_grows_quadratically():
    floats = []
    for n in (32, 64, 128):
        A, B, W = _inputs(n, seed=0)
        with AllocationTracker() as tracker:
            sdisco(A, B, W)
        floats.append(tracker.stats.peak_floats)
    slope = np.polyfit(np.log([32, 64, 128]), np.log(floats), 1)[0]
    assert 1.8 <= slope <= 2.2


def test_penalty_needs_four_samples(rng):
    with pytest.raises(EstimatorUndefinedError):
        penalty(rng.normal(size=(3, 1)), rng.normal(size=(3, 1)), rng.normal(size=(3, 1)), 1.0)


def test_penalty_rejects_mismatched_rows(rng):
    with pytest.raises(DimensionError):
        penalty(rng.normal(size=(8, 1)), rng.normal(size=(7, 1)), rng.normal(size=(8, 1)), 1.0)


def test_penalty_rejects_unknown_estimator(rng):
    with pytest.raises(ConfigurationError):
        penalty(rng.normal(size=(8, 1)), rng.normal(size=(8, 1)), rng.normal(size=(8, 1)), 1.0, estimator="hsic")


@pytest.mark.parametrize("n", [8, 16, 32])
def test_penalty_gradient_matches_finite_differences(n):
    gen = stream(n, "penalty_gradient")
    predictions = gen.normal(size=(n, 2))
    bias = gen.normal(size=(n, 1))
    condition = gen.normal(size=(n, 1))
    bandwidth = median_heuristic(condition)
    err = finite_diff_check(lambda t, x: penalty(x, bias, condition, bandwidth), predictions)
    assert err < 1e-5


def test_disco_m_penalty_gradient_matches_finite_differences():
    gen = stream(0, "disco_m_gradient")
    predictions = gen.normal(size=(16, 1))
    bias = gen.normal(size=(16, 1))
    condition = gen.normal(size=(16, 1))
    err = finite_diff_check(
        lambda t, x: penalty(x, bias, condition, 1.0, estimator="disco_m", m=6, seed=3), predictions
    )
    assert err < 1e-5


def test_penalty_value_matches_float_estimate(rng):
    predictions = rng.normal(size=(20, 2))
    bias = rng.normal(size=(20, 1))
    condition = rng.normal(size=(20, 1))
    value = penalty(predictions, bias, condition, 0.8).item()
    W = rbf_weights(condition, 0.8)
    B = pairwise_distance((bias - bias.mean()) / bias.std())
    assert value == pytest.approx(sdisco(pairwise_distance(predictions), B, W), abs=1e-10)


def test_module_a_report(rng):
    predictions = rng.normal(size=(40, 1))
    report = ModuleA().analyze(predictions, rng.normal(size=(40, 1)), rng.normal(size=(40, 1)))
    assert set(report) >= {"dcor2", "sdisco", "disco_m", "naive", "m"}
    assert report["m"] == 8
    assert report["sdisco"] == pytest.approx(report["naive"], abs=1e-10)


@pytest.mark.slow
def test_conditionally_independent_family_scores_low_and_dependent_high():
    low = 0
    high = 0
    for seed in range(100):
        gen = stream(seed, "calibration")
        y = gen.normal(size=(512, 1))
        z = y + gen.normal(size=(512, 1))
        noise = gen.normal(size=(512, 1))
        W = rbf_weights(y, median_heuristic(y))
        B = pairwise_distance(z)
        low += sdisco(pairwise_distance(noise), B, W) < 0.08
        high += sdisco(pairwise_distance(y + z), B, W) > 0.3
    assert low >= 90
    assert high >= 90


@pytest.mark.slow
def test_mean_estimate_shrinks_with_n_under_conditional_independence():
    means = []
    for n in (64, 128, 256, 512):
        values = []
        for seed in range(50):
            gen = stream(seed, "consistency", n)
            y = gen.normal(size=(n, 1))
            z = y + gen.normal(size=(n, 1))
            noise = gen.normal(size=(n, 1))
            W = rbf_weights(y, bandwidth_for_n(1.0, n))
            values.append(sdisco(pairwise_distance(noise), pairwise_distance(z), W))
        means.append(float(np.mean(values)))
    assert all(later <= earlier for earlier, later in zip(means, means[1:]))
