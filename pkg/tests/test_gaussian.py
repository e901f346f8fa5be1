import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ntype_gmphd.gaussian import (
    GaussianComponent,
    NotPositiveDefiniteError,
    gaussian_pdf,
    kalman_gain,
    marginal_likelihood,
)

from oracles import midpoint_quad_2d, normal_1d, normal_2d, random_spd

H = np.hstack([np.eye(2), np.zeros((2, 2))])


def test_pdf_at_mean_is_normalizer():
    assert gaussian_pdf([0, 0], [0, 0], np.eye(2)) == pytest.approx(1 / (2 * math.pi), abs=1e-15)
    assert gaussian_pdf([0, 0], [0, 0], np.eye(2)) == pytest.approx(0.15915494, abs=1e-8)


def test_pdf_unit_offset():
    expected = math.exp(-0.5) / (2 * math.pi)
    assert gaussian_pdf([1, 0], [0, 0], np.eye(2)) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.09653235, abs=1e-8)


def test_pdf_matches_product_of_1d_densities():
    oracle = normal_1d(3, 0, 4) * normal_1d(4, 0, 4)
    assert abs(gaussian_pdf([3, 4], [0, 0], np.diag([4.0, 4.0])) - oracle) < 1e-12


def test_pdf_matches_closed_form_correlated():
    S = np.array([[5.0, 1.5], [1.5, 2.0]])
    assert gaussian_pdf([1.0, -2.0], [0.5, 0.3], S) == pytest.approx(
        normal_2d([1.0, -2.0], [0.5, 0.3], S), rel=1e-12)


def test_pdf_rejects_indefinite_covariance():
    with pytest.raises(NotPositiveDefiniteError, match="covariance"):
        gaussian_pdf([0, 0], [0, 0], np.array([[1.0, 2.0], [2.0, 1.0]]))


@pytest.mark.parametrize("sx,sy", [(1.0, 1.0), (3.0, 0.5), (10.0, 6.0)])
def test_pdf_integrates_to_one(sx, sy):
    cov = np.diag([sx ** 2, sy ** 2])

    def f(X, Y):
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        return np.array([gaussian_pdf(p, [0, 0], cov) for p in pts]).reshape(X.shape)

    # integrate in standardized coordinates so the box is +-8 sigma on both axes
    def g(U, V):
        return f(U * sx, V * sy) * sx * sy

    assert midpoint_quad_2d(g, (0, 0), 8.0, 120) == pytest.approx(1.0, abs=1e-3)


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-50, 50), st.floats(-50, 50))
def test_pdf_symmetric_in_point_and_mean(a, b, c, d):
    C = np.array([[9.0, 2.0], [2.0, 4.0]])
    assert gaussian_pdf([a, b], [c, d], C) == pytest.approx(gaussian_pdf([c, d], [a, b], C), rel=1e-12)


def test_marginal_likelihood_unit_case():
    comp = GaussianComponent(1.0, np.zeros(4), np.eye(4))
    assert marginal_likelihood([0, 0], comp, H, np.eye(2)) == pytest.approx(1 / (4 * math.pi), rel=1e-14)


def test_marginal_likelihood_mode_value():
    comp = GaussianComponent(1.0, np.array([3.0, -1.0, 2.0, 0.0]), np.diag([4.0, 9.0, 1.0, 1.0]))
    R = np.diag([1.0, 2.0])
    S = np.diag([5.0, 11.0])
    expected = 1 / (2 * math.pi * math.sqrt(np.linalg.det(S)))
    assert marginal_likelihood([3.0, -1.0], comp, H, R) == pytest.approx(expected, rel=1e-13)


def test_marginal_likelihood_matches_hand_composed_innovation():
    rng = np.random.default_rng(3)
    for _ in range(20):
        P = random_spd(rng, 4, 3.0)
        R = random_spd(rng, 2, 2.0)
        m = rng.normal(size=4) * 10
        z = rng.normal(size=2) * 10
        S = H @ P @ H.T + R
        comp = GaussianComponent(0.5, m, 0.5 * (P + P.T))
        assert marginal_likelihood(z, comp, H, R) == pytest.approx(normal_2d(z, H @ m, S), rel=1e-10)


def test_kalman_gain_scalar_case():
    K, P_upd = kalman_gain(np.eye(4), H, np.eye(2))
    np.testing.assert_allclose(K, np.vstack([0.5 * np.eye(2), np.zeros((2, 2))]), atol=1e-15)
    np.testing.assert_allclose(P_upd, np.diag([0.5, 0.5, 1, 1]), atol=1e-15)


def test_kalman_gain_uninformative_limit():
    P = np.diag([200.0, 200.0, 100.0, 100.0])
    K, P_upd = kalman_gain(P, H, 1e12 * np.eye(2))
    assert np.max(np.abs(K)) < 1e-9
    np.testing.assert_allclose(P_upd, P, rtol=1e-6)


def test_kalman_gain_matches_joseph_form():
    rng = np.random.default_rng(11)
    for _ in range(50):
        P = random_spd(rng, 4, 5.0)
        R = random_spd(rng, 2, 3.0)
        K, P_upd = kalman_gain(P, H, R)
        A = np.eye(4) - K @ H
        joseph = A @ P @ A.T + K @ R @ K.T
        np.testing.assert_allclose(P_upd, joseph, atol=1e-8 * np.max(np.abs(P)))


def test_kalman_gain_rejects_bad_innovation_covariance():
    with pytest.raises(NotPositiveDefiniteError, match="innovation"):
        kalman_gain(np.eye(4), H, -5 * np.eye(2))


@settings(max_examples=200)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 100))
def test_kalman_posterior_stays_spd(seed, scale):
    rng = np.random.default_rng(seed)
    P = random_spd(rng, 4, scale, jitter=1e-3)
    R = random_spd(rng, 2, scale, jitter=1e-3)
    _, P_upd = kalman_gain(P, H, R)
    np.testing.assert_array_equal(P_upd, P_upd.T)
    assert np.all(np.linalg.eigvalsh(P_upd) > 0)


def test_component_validation():
    with pytest.raises(ValueError):
        GaussianComponent(-1.0, np.zeros(4), np.eye(4))
    with pytest.raises(ValueError):
        GaussianComponent(1.0, np.zeros(4), np.eye(3))
    with pytest.raises(NotPositiveDefiniteError):
        GaussianComponent(1.0, np.zeros(4), -np.eye(4))
