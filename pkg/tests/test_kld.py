import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from klident.errors import MetricError, SelectionError
from klident.kld import (
    GaussianSummary,
    KlTrace,
    PriorDivergence,
    RunningCovariance,
    error_metric,
    gaussian_kl,
    select_best,
    track_summary,
)

from oracles import kl_by_quadrature, random_gaussian


@pytest.mark.parametrize("case", range(20))
def test_kl_matches_quadrature(case):
    rng = np.random.default_rng(case)
    d = (1, 2, 3)[case % 3]
    prior, post = random_gaussian(rng, d), random_gaussian(rng, d)
    oracle = kl_by_quadrature(prior, post)
    assert gaussian_kl(prior, post) == pytest.approx(oracle, rel=1e-6)


def test_kl_scalar_example():
    assert gaussian_kl(GaussianSummary(np.zeros(1), np.eye(1)), GaussianSummary(np.ones(1), np.eye(1))) == pytest.approx(0.5)


@pytest.mark.parametrize("d", [1, 3, 6])
def test_kl_of_identical_gaussians_is_zero(d):
    q = random_gaussian(np.random.default_rng(d), d)
    assert abs(gaussian_kl(q, q)) <= 1e-12


def test_kl_is_non_negative():
    rng = np.random.default_rng(123)
    for _ in range(1000):
        d = int(rng.integers(1, 7))
        assert gaussian_kl(random_gaussian(rng, d, 3.0), random_gaussian(rng, d, 3.0)) >= -1e-12


@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
@settings(max_examples=50, deadline=None)
def test_prior_divergence_matches_closed_form(d, seed):
    rng = np.random.default_rng(seed)
    prior, post = random_gaussian(rng, d), random_gaussian(rng, d)
    assert PriorDivergence(prior)(post.mean, post.cov) == pytest.approx(gaussian_kl(prior, post), rel=1e-10, abs=1e-12)


def test_kl_rejects_bad_inputs():
    good = GaussianSummary(np.zeros(2), np.eye(2))
    with pytest.raises(ValueError):
        gaussian_kl(good, GaussianSummary(np.zeros(3), np.eye(3)))
    with pytest.raises(np.linalg.LinAlgError):
        gaussian_kl(good, GaussianSummary(np.zeros(2), np.diag([1.0, -1.0])))


def test_running_covariance_matches_numpy():
    x = np.random.default_rng(0).normal(size=(500, 4)) @ np.diag([1.0, 2.0, 0.5, 3.0])
    rc = RunningCovariance(4, ridge=0.0)
    for row in x:
        rc.push(row)
    np.testing.assert_allclose(rc.covariance(), np.cov(x, rowvar=False), rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(rc.mean, x.mean(axis=0), atol=1e-12)


def test_constant_track_gets_ridge_covariance():
    summary = track_summary(np.tile([9.0, 11.0, 13.0], (50, 1)))
    np.testing.assert_array_equal(summary.cov, 1e-8 * np.eye(3))
    rc = RunningCovariance(3)
    for _ in range(50):
        rc.push([9.0, 11.0, 13.0])
    np.testing.assert_allclose(rc.covariance(), 1e-8 * np.eye(3), atol=1e-20)


def test_track_covariance_recovers_sampling_covariance():
    true_cov = np.array([[2.0, 0.3], [0.3, 0.5]])
    track = np.random.default_rng(5).multivariate_normal([1.0, -1.0], true_cov, size=10_000)
    summary = track_summary(track)
    np.testing.assert_allclose(summary.cov, true_cov, rtol=0.1, atol=0.02)
    np.testing.assert_array_equal(summary.mean, track[-1])
    windowed = track_summary(track, window=100)
    np.testing.assert_allclose(windowed.cov, np.cov(track[-100:], rowvar=False) + 1e-8 * np.eye(2))


def test_error_metric_examples():
    truth = np.array([9.0, 11.0, 13.0, 0.25, 0.5, 0.75])
    assert error_metric(0.75 * truth, truth) == pytest.approx(1.5)
    assert error_metric(0.5 * truth, truth) == pytest.approx(3.0)
    assert error_metric(truth, truth) == 0.0
    rows = error_metric(np.stack([truth, 1.5 * truth]), truth)
    np.testing.assert_allclose(rows, [0.0, 3.0])
    with pytest.raises(MetricError):
        error_metric(truth, np.r_[truth[:-1], 0.0])


def _trace(s, final, failed=False):
    return KlTrace(s, np.array([0.0, final]), failed)


def test_select_best_picks_smallest_final_divergence():
    report = select_best([_trace(1, 5.0), _trace(2, 1.0), _trace(3, 3.0)])
    assert report.winner == 2 and report.note == ""
    assert report.final_kl() == {1: 5.0, 2: 1.0, 3: 3.0}


def test_select_best_single_tie_and_failures():
    assert select_best([_trace(4, 2.0)]).winner == 4
    tie = select_best([_trace(3, 1.0), _trace(2, 1.0)])
    assert tie.winner == 2 and "tie" in tie.note
    assert select_best([_trace(1, 0.1, failed=True), _trace(2, 9.0)]).winner == 2
    assert select_best([_trace(1, np.inf), _trace(2, 9.0)]).winner == 2
    with pytest.raises(SelectionError):
        select_best([_trace(1, 0.1, failed=True)])
    with pytest.raises(SelectionError):
        select_best([])
