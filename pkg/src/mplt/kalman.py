"""Constant-velocity Kalman filter over (cx, cy, w, h) box measurements."""

from dataclasses import dataclass, field

import numpy as np

from .boxes import BBox

STATE_DIM = 8   # cx, cy, w, h, vcx, vcy, vw, vh
MEAS_DIM = 4

DEFAULT_Q_POS = 1e-2
DEFAULT_Q_VEL = 1e-4
DEFAULT_R = 1e-1
DEFAULT_P0 = 10.0


class FilterError(ArithmeticError):
    pass


def _transition(dt=1.0):
    f = np.eye(STATE_DIM)
    for i in range(MEAS_DIM):
        f[i, i + MEAS_DIM] = dt
    return f


def _measurement_matrix():
    h = np.zeros((MEAS_DIM, STATE_DIM))
    h[:, :MEAS_DIM] = np.eye(MEAS_DIM)
    return h


@dataclass
class KalmanState:
    mean: np.ndarray
    cov: np.ndarray
    q: np.ndarray = field(default_factory=lambda: np.diag(
        [DEFAULT_Q_POS] * MEAS_DIM + [DEFAULT_Q_VEL] * MEAS_DIM))
    r: np.ndarray = field(default_factory=lambda: np.diag(
        [DEFAULT_R] * MEAS_DIM))

    @staticmethod
    def from_box(box, q_pos=DEFAULT_Q_POS, q_vel=DEFAULT_Q_VEL,
                 r_meas=DEFAULT_R, p0=DEFAULT_P0):
        mean = np.zeros(STATE_DIM)
        mean[:MEAS_DIM] = [box.cx, box.cy, box.w, box.h]
        return KalmanState(
            mean=mean,
            cov=p0 * np.eye(STATE_DIM),
            q=np.diag([q_pos] * MEAS_DIM + [q_vel] * MEAS_DIM),
            r=np.diag([r_meas] * MEAS_DIM),
        )

    def box(self, confidence=1.0):
        cx, cy, w, h = self.mean[:MEAS_DIM]
        return BBox.from_center(cx, cy, max(w, 1e-6), max(h, 1e-6), confidence)


def kf_predict(state, dt=1.0):
    """Constant-velocity time update; returns (mean, covariance)."""
    f = _transition(dt)
    mean = f @ state.mean
    cov = f @ state.cov @ f.T + state.q
    return mean, 0.5 * (cov + cov.T)


def kf_predict_state(state, dt=1.0):
    mean, cov = kf_predict(state, dt)
    return KalmanState(mean=mean, cov=cov, q=state.q, r=state.r)


def kf_update(state, measurement):
    """Measurement update (Joseph-stabilized covariance)."""
    z = np.array([measurement.cx, measurement.cy, measurement.w,
                  measurement.h])
    h = _measurement_matrix()
    innovation_cov = h @ state.cov @ h.T + state.r
    try:
        gain = np.linalg.solve(innovation_cov.T, (state.cov @ h.T).T).T
    except np.linalg.LinAlgError as exc:
        raise FilterError(
            f"singular innovation covariance: {innovation_cov!r}") from exc
    mean = state.mean + gain @ (z - h @ state.mean)
    ikh = np.eye(STATE_DIM) - gain @ h
    cov = ikh @ state.cov @ ikh.T + gain @ state.r @ gain.T
    return KalmanState(mean=mean, cov=0.5 * (cov + cov.T), q=state.q,
                       r=state.r)
