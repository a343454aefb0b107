"""Kalman filter vs an independently coded naive matrix oracle."""

import numpy as np
import pytest

from mplt import kalman
from mplt.boxes import BBox


# --- independent oracle: textbook equations, no shared helpers -------------

def oracle_predict(mean, cov, q, dt=1.0):
    f = np.eye(8)
    f[0, 4] = f[1, 5] = f[2, 6] = f[3, 7] = dt
    return f @ mean, f @ cov @ f.T + q


def oracle_update(mean, cov, r, z):
    h = np.hstack([np.eye(4), np.zeros((4, 4))])
    s = h @ cov @ h.T + r
    k = cov @ h.T @ np.linalg.inv(s)
    new_mean = mean + k @ (z - h @ mean)
    new_cov = (np.eye(8) - k @ h) @ cov
    return new_mean, new_cov


def random_state(rng):
    mean = rng.normal(0, 10, size=8)
    mean[2:4] = np.abs(mean[2:4]) + 1.0
    a = rng.normal(size=(8, 8))
    cov = a @ a.T + 0.1 * np.eye(8)
    return kalman.KalmanState(mean=mean, cov=cov)


class TestPredict:
    def test_analytic_constant_velocity(self):
        state = kalman.KalmanState(
            mean=np.array([0.0, 0.0, 10.0, 10.0, 1.0, 1.0, 0.0, 0.0]),
            cov=np.eye(8))
        mean, _ = kalman.kf_predict(state)
        np.testing.assert_allclose(mean[:4], [1.0, 1.0, 10.0, 10.0])

    def test_zero_velocity_stays_put(self):
        state = kalman.KalmanState(
            mean=np.array([5.0, 6.0, 3.0, 4.0, 0.0, 0.0, 0.0, 0.0]),
            cov=np.eye(8))
        mean, _ = kalman.kf_predict(state)
        np.testing.assert_allclose(mean[:4], [5.0, 6.0, 3.0, 4.0])

    def test_100_random_cycles_match_oracle(self):
        rng = np.random.default_rng(0)
        state = random_state(rng)
        mean, cov = state.mean.copy(), state.cov.copy()
        for _ in range(100):
            state = kalman.kf_predict_state(state)
            mean, cov = oracle_predict(mean, cov, state.q)
            z = mean[:4] + rng.normal(0, 0.5, size=4)
            z[2:] = np.maximum(z[2:], 0.5)
            meas = BBox.from_center(*z)
            state = kalman.kf_update(state, meas)
            mean, cov = oracle_update(mean, cov, state.r, z)
            assert np.abs(state.mean - mean).max() < 1e-9
            assert np.abs(state.cov - cov).max() < 1e-9


class TestUpdate:
    def test_tiny_r_posterior_equals_measurement(self):
        state = kalman.KalmanState(
            mean=np.array([0.0, 0.0, 10.0, 10.0, 0.0, 0.0, 0.0, 0.0]),
            cov=10.0 * np.eye(8), r=1e-12 * np.eye(4))
        meas = BBox.from_center(3.0, 4.0, 12.0, 8.0)
        updated = kalman.kf_update(state, meas)
        np.testing.assert_allclose(updated.mean[:4], [3.0, 4.0, 12.0, 8.0],
                                   atol=1e-6)

    def test_noiseless_constant_velocity_prediction(self):
        box0 = BBox.from_center(0.0, 0.0, 10.0, 10.0)
        state = kalman.KalmanState.from_box(box0, q_pos=1e-6, q_vel=1e-6,
                                            r_meas=1e-9, p0=10.0)
        for cx in (1.0, 2.0):
            state = kalman.kf_predict_state(state)
            state = kalman.kf_update(
                state, BBox.from_center(cx, cx, 10.0, 10.0))
        mean, _ = kalman.kf_predict(state)
        assert abs(mean[0] - 3.0) < 1e-3
        assert abs(mean[1] - 3.0) < 1e-3

    def test_covariance_symmetric_psd_over_1000_steps(self):
        rng = np.random.default_rng(1)
        state = random_state(rng)
        for _ in range(1000):
            state = kalman.kf_predict_state(state)
            if rng.random() < 0.7:
                z = state.mean[:4] + rng.normal(0, 1.0, size=4)
                z[2:] = np.maximum(z[2:], 0.5)
                state = kalman.kf_update(state, BBox.from_center(*z))
            assert np.abs(state.cov - state.cov.T).max() < 1e-9
            assert np.linalg.eigvalsh(state.cov).min() > -1e-9

    def test_singular_innovation_raises(self):
        state = kalman.KalmanState(mean=np.zeros(8),
                                   cov=np.zeros((8, 8)),
                                   r=np.zeros((4, 4)))
        with pytest.raises(kalman.FilterError):
            kalman.kf_update(state, BBox.from_center(0, 0, 1, 1))


class TestFromBox:
    def test_init_state(self):
        box = BBox(10.0, 20.0, 30.0, 40.0)
        state = kalman.KalmanState.from_box(box)
        np.testing.assert_allclose(state.mean[:4], [25.0, 40.0, 30.0, 40.0])
        np.testing.assert_array_equal(state.mean[4:], 0.0)
        np.testing.assert_array_equal(state.cov, 10.0 * np.eye(8))

    def test_box_round_trip(self):
        box = BBox(10.0, 20.0, 30.0, 40.0)
        state = kalman.KalmanState.from_box(box)
        back = state.box(confidence=0.5)
        assert back.x == pytest.approx(box.x)
        assert back.y == pytest.approx(box.y)
        assert back.w == pytest.approx(box.w)
        assert back.h == pytest.approx(box.h)
        assert back.confidence == 0.5
