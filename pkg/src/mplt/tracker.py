"""Online inference: cropping, the per-frame tracking loop, and the
confidence-gated template update / Kalman correction of Algorithm-style
post-processing.

Frames entering the tracker are already normalized float arrays (see
fileio.normalize_frame).  Boxes are in frame pixel coordinates.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import kalman, kernels, model
from .boxes import BBox, CropGeometry

TEMPLATE_CONTEXT = 2.0
SEARCH_CONTEXT = 4.0

DEFAULT_THR_A = 0.91   # template re-crop threshold (strict >)
DEFAULT_THR_B = 0.25   # Kalman correction threshold (strict <)
DEFAULT_BUFFER_N = 16


class TrackError(RuntimeError):
    pass


def crop_region(frame, box, context_factor, out_size):
    """Square context crop around `box`, resized to out_size x out_size.

    Out-of-frame area is filled with the frame's per-channel mean.
    """
    side = context_factor * float(np.sqrt(box.w * box.h))
    if side <= 0:
        raise ValueError("degenerate box for cropping")
    geom = CropGeometry(frame_w=frame.shape[1], frame_h=frame.shape[0],
                        center_x=box.cx, center_y=box.cy, side=side,
                        out_size=out_size)
    fill = frame.reshape(-1, frame.shape[2]).mean(axis=0)
    crop = kernels.bilinear_crop(frame, box.cx - side / 2.0,
                                 box.cy - side / 2.0, geom.scale, out_size,
                                 fill)
    return crop, geom


@dataclass
class TrackerState:
    config: model.ModelConfig
    template_rgb: np.ndarray
    template_tir: np.ndarray
    kalman: kalman.KalmanState
    thr_a: float = DEFAULT_THR_A
    thr_b: float = DEFAULT_THR_B
    buffer_n: int = DEFAULT_BUFFER_N
    frame_index: int = 0
    last_box: BBox = None
    # (frame index, decoded box, confidence) for the last n frames
    history: deque = field(default_factory=deque)

    def record(self, box, confidence):
        self.history.append((self.frame_index, box, confidence))
        while len(self.history) > self.buffer_n:
            self.history.popleft()


def init_track(frame_rgb, frame_tir, init_box, config, thr_a=DEFAULT_THR_A,
               thr_b=DEFAULT_THR_B, buffer_n=DEFAULT_BUFFER_N,
               kf_noise=None):
    if frame_rgb.shape != frame_tir.shape:
        raise TrackError(
            f"misaligned frames: {frame_rgb.shape} vs {frame_tir.shape}")
    if not 0 <= thr_b < thr_a <= 1:
        raise ValueError("thresholds must satisfy 0 <= thr_b < thr_a <= 1")
    tz_rgb, _ = crop_region(frame_rgb, init_box, TEMPLATE_CONTEXT,
                            config.template_size[0])
    tz_tir, _ = crop_region(frame_tir, init_box, TEMPLATE_CONTEXT,
                            config.template_size[0])
    kf = kalman.KalmanState.from_box(init_box, **(kf_noise or {}))
    state = TrackerState(config=config, template_rgb=tz_rgb,
                         template_tir=tz_tir, kalman=kf, thr_a=thr_a,
                         thr_b=thr_b, buffer_n=buffer_n,
                         last_box=init_box)
    state.record(init_box, 1.0)
    return state


def _confident_entries(state):
    return [(idx, box) for idx, box, conf in state.history
            if conf >= state.thr_b]


def _window_predict(state):
    """Re-filter the confident entries of the ring buffer and predict the
    current frame; uses at most the last buffer_n frames of history."""
    entries = _confident_entries(state)
    first_idx, first_box = entries[0]
    kf = kalman.KalmanState.from_box(
        first_box, q_pos=state.kalman.q[0, 0], q_vel=state.kalman.q[4, 4],
        r_meas=state.kalman.r[0, 0])
    prev_idx = first_idx
    for idx, box in entries[1:]:
        kf = kalman.kf_predict_state(kf, dt=idx - prev_idx)
        kf = kalman.kf_update(kf, box)
        prev_idx = idx
    kf = kalman.kf_predict_state(kf, dt=state.frame_index - prev_idx)
    return kf


def kf_correct_gate(state, decoded, confidence):
    """Replace a low-confidence decode by the Kalman prediction.

    Confident decodes feed the filter; low-confidence ones never touch the
    filter mean.  Correction needs at least two confident history entries.
    """
    if not state.config.use_kalman:
        return decoded
    if confidence < state.thr_b:
        if len(_confident_entries(state)) < 2:
            return decoded
        kf = _window_predict(state)
        state.kalman = kf
        return kf.box(confidence=confidence)
    state.kalman = kalman.kf_update(
        kalman.kf_predict_state(state.kalman), decoded)
    return decoded


def template_update_gate(state, frame_rgb, frame_tir, box, confidence):
    """Re-crop the dynamic template when the decode is confident enough."""
    if not state.config.use_template_update:
        return False
    if confidence > state.thr_a:
        state.template_rgb, _ = crop_region(frame_rgb, box, TEMPLATE_CONTEXT,
                                            state.config.template_size[0])
        state.template_tir, _ = crop_region(frame_tir, box, TEMPLATE_CONTEXT,
                                            state.config.template_size[0])
        return True
    return False


def track_step(state, frame_rgb, frame_tir, params):
    """One tracking iteration; returns the (possibly corrected) frame box."""
    config = state.config
    state.frame_index += 1
    try:
        search_rgb, geom = crop_region(frame_rgb, state.last_box,
                                       SEARCH_CONTEXT, config.search_size[0])
        search_tir, _ = crop_region(frame_tir, state.last_box,
                                    SEARCH_CONTEXT, config.search_size[0])
        out = model.forward_pair(state.template_rgb, search_rgb,
                                 state.template_tir, search_tir, params,
                                 config)
        decoded = model.decode_box(out, geom, config)
    except Exception as exc:
        raise TrackError(
            f"forward failed at frame {state.frame_index}: {exc}") from exc
    confidence = decoded.confidence
    state.record(decoded, confidence)
    corrected = kf_correct_gate(state, decoded, confidence)
    template_update_gate(state, frame_rgb, frame_tir, corrected, confidence)
    state.last_box = corrected
    return corrected


def run_sequence(params, config, frames_rgb, frames_tir, init_box, **kwargs):
    """Track a whole normalized-frame sequence; returns one box per frame."""
    state = init_track(frames_rgb[0], frames_tir[0], init_box, config,
                       **kwargs)
    boxes = [BBox(init_box.x, init_box.y, init_box.w, init_box.h, 1.0)]
    for rgb, tir in zip(frames_rgb[1:], frames_tir[1:]):
        boxes.append(track_step(state, rgb, tir, params))
    return boxes
