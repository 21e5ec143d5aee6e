import numpy as np
import pytest

from conftest import random_stable_linear_model
from nlgmp.errors import NumericalError, PreconditionError
from nlgmp.gaussian import GaussianMoments
from nlgmp.oracle import grid_bayes_1d, kalman_innovations, kalman_reference, mc_moments
from nlgmp.ssm import StateSpaceModel, VectorFunction, simulate, ungm_model


def test_mc_identity_mean():
    g = GaussianMoments([1.0, -2.0], [[2.0, 0.3], [0.3, 0.5]])
    mc = mc_moments(lambda x: x, g, samples=10**5, seed=1, vectorized=True)
    assert np.all(np.abs(mc.mean - g.mean) <= 3 * mc.standard_errors.mean)
    assert np.all(mc.standard_errors.mean > 0)
    np.testing.assert_array_equal(mc.cov, mc.cov.T)


@pytest.mark.slow
def test_mc_square_moments():
    mc = mc_moments(lambda x: x**2, GaussianMoments([0.0], [[1.0]]), samples=10**6, seed=2, vectorized=True)
    assert abs(mc.mean[0] - 1.0) <= 3 * mc.standard_errors.mean[0]
    assert abs(mc.cov[0, 0] - 2.0) <= 3 * mc.standard_errors.cov[0, 0]
    assert mc.sample_count == 10**6


def test_mc_rowwise_and_vectorized_agree():
    g = GaussianMoments([0.2], [[0.5]])
    a = mc_moments(np.sin, g, samples=10**4, seed=5)
    b = mc_moments(np.sin, g, samples=10**4, seed=5, vectorized=True)
    np.testing.assert_allclose(a.mean, b.mean, rtol=1e-12)
    np.testing.assert_allclose(a.cross, b.cross, rtol=1e-12)


@pytest.mark.slow
def test_mc_standard_errors_shrink_as_root_n():
    g = GaussianMoments([0.5], [[0.09]])
    small = mc_moments(np.sin, g, samples=10**4, seed=7, vectorized=True)
    large = mc_moments(np.sin, g, samples=10**6, seed=7, vectorized=True)
    for a, b in zip(small.standard_errors, large.standard_errors):
        ratio = np.asarray(a) / np.asarray(b)
        assert np.all((ratio > 7.0) & (ratio < 13.0))


def test_mc_rejects_small_sample_and_nonfinite():
    g = GaussianMoments([0.0], [[1.0]])
    with pytest.raises(ValueError):
        mc_moments(np.sin, g, samples=100)
    with pytest.raises(NumericalError):
        with np.errstate(invalid="ignore"):
            mc_moments(np.log, g, samples=10**4, vectorized=True)


def test_mc_is_reproducible_per_seed():
    g = GaussianMoments([0.0], [[1.0]])
    a = mc_moments(np.cos, g, samples=10**4, seed=9, vectorized=True)
    b = mc_moments(np.cos, g, samples=10**4, seed=9, vectorized=True)
    np.testing.assert_array_equal(a.mean, b.mean)


def test_kalman_reference_noise_free_limit(rng):
    n = 2
    H = np.array([[1.0, 0.5], [-0.3, 2.0]])
    model = StateSpaceModel(
        n, 0, n, VectorFunction.linear(np.eye(n)), None, VectorFunction.linear(H),
        np.zeros((n, n)), 1e-12 * np.eye(n), GaussianMoments(np.zeros(n), np.eye(n)),
    )
    ys = simulate(model, np.zeros((5, 0)), seed=3).observations
    filtered, _ = kalman_reference(model, ys)
    for y, (m, _) in zip(ys, filtered):
        # R = 1e-12 leaves measurement noise of order 1e-6
        np.testing.assert_allclose(m, np.linalg.solve(H, y), atol=1e-5)


def test_kalman_reference_single_step_smoother_equals_filter(rng):
    model = random_stable_linear_model(rng, 3, 2)
    filtered, smoothed = kalman_reference(model, [rng.standard_normal(2)])
    np.testing.assert_array_equal(filtered[0][0], smoothed[0][0])
    np.testing.assert_array_equal(filtered[0][1], smoothed[0][1])


@pytest.mark.slow
def test_kalman_innovations_are_white(rng):
    model = random_stable_linear_model(rng, 3, 1)
    traj = simulate(model, np.zeros((2000, 0)), seed=31)
    e = kalman_innovations(model, traj.observations)[:, 0]
    e = e - e.mean()
    rho = float(e[1:] @ e[:-1] / (e @ e))
    assert abs(rho) < 0.1
    assert 0.85 < e.var() < 1.15


def test_kalman_reference_rejects_nonlinear():
    with pytest.raises(PreconditionError):
        kalman_reference(ungm_model(), [[0.0]], [[1.0]])


def test_grid_identity_matches_conjugate():
    prior = GaussianMoments([0.3], [[2.0]])
    post = grid_bayes_1d(prior, lambda x: x, 1.7, 0.5)
    k = 2.0 / 2.5
    assert post.mean[0] == pytest.approx(0.3 + k * 1.4, abs=1e-6)
    assert post.cov[0, 0] == pytest.approx((1 - k) * 2.0, abs=1e-6)


def test_grid_vacuous_likelihood_returns_prior():
    prior = GaussianMoments([-1.0], [[0.7]])
    post = grid_bayes_1d(prior, np.sin, 0.4, 1e12)
    assert post.mean[0] == pytest.approx(-1.0, abs=1e-4)
    assert post.cov[0, 0] == pytest.approx(0.7, abs=1e-4)


def test_grid_square_reference_near_positive_root():
    post = grid_bayes_1d(GaussianMoments([0.5], [[0.01]]), lambda x: x**2, 0.25, 1e-4)
    assert post.mean[0] == pytest.approx(0.5, abs=5e-3)
    assert 0 < post.cov[0, 0] < 0.01


def test_grid_preconditions():
    g = GaussianMoments([0.0], [[1.0]])
    with pytest.raises(ValueError):
        grid_bayes_1d(g, np.sin, 0.0, 1.0, half_width=4)
    with pytest.raises(ValueError):
        grid_bayes_1d(g, np.sin, 0.0, 1.0, points=100)
    with pytest.raises(ValueError):
        grid_bayes_1d(GaussianMoments(np.zeros(2), np.eye(2)), np.sin, 0.0, 1.0)
