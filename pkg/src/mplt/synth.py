"""Deterministic synthetic RGB-T sequences with exact ground truth.

Desk-scale stand-in for real RGB-T benchmark data.  A rectangular target
moves over a flat textured background; per-segment degradations model the
benchmark attribute regimes: LI zeroes the target contrast in the RGB
modality, TC flattens the thermal modality, FL only tags frames.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .boxes import BBox

ATTR_LOW_ILLUMINATION = "LI"
ATTR_THERMAL_CROSSOVER = "TC"
ATTR_FRAME_LOSS = "FL"
KNOWN_ATTRIBUTES = (ATTR_LOW_ILLUMINATION, ATTR_THERMAL_CROSSOVER,
                    ATTR_FRAME_LOSS)


@dataclass
class SynthSpec:
    num_frames: int = 40
    frame_size: tuple = (96, 96)        # (H, W)
    target_size: tuple = (20, 20)       # (h, w)
    trajectory: str = "linear"          # static | linear | sinusoidal
    start: tuple = (30.0, 30.0)         # initial target center (cx, cy)
    velocity: tuple = (1.0, 0.5)        # px/frame for linear motion
    amplitude: float = 10.0             # sinusoidal vertical swing
    period: float = 24.0                # sinusoidal period in frames
    rgb_background: int = 60
    rgb_target: int = 200
    tir_background: int = 40
    tir_target: int = 220
    noise: float = 4.0                  # additive pixel noise std (0..255)
    # (first_frame, last_frame_exclusive, attribute) degradation segments
    segments: list = field(default_factory=list)

    def validate(self):
        if self.num_frames < 1:
            raise ValueError("num_frames must be positive")
        if self.trajectory not in ("static", "linear", "sinusoidal"):
            raise ValueError(f"unknown trajectory '{self.trajectory}'")
        for lo, hi, attr in self.segments:
            if attr not in KNOWN_ATTRIBUTES:
                raise ValueError(f"unknown attribute '{attr}'")
            if not 0 <= lo < hi <= self.num_frames:
                raise ValueError(f"bad segment range [{lo}, {hi})")


@dataclass
class SequenceRecord:
    name: str
    frames_rgb: list     # uint8 H x W x 3 arrays
    frames_tir: list
    gt: list             # BBox per frame
    attributes: list     # list of attribute tags per frame

    def __post_init__(self):
        if not (len(self.frames_rgb) == len(self.frames_tir) == len(self.gt)):
            raise ValueError("frame and ground-truth counts differ")
        shapes = {f.shape for f in self.frames_rgb + self.frames_tir}
        if len(shapes) > 1:
            raise ValueError(f"frames differ in size: {shapes}")

    def __len__(self):
        return len(self.gt)


def _center_at(spec, t):
    cx0, cy0 = spec.start
    if spec.trajectory == "static":
        return cx0, cy0
    if spec.trajectory == "linear":
        return cx0 + spec.velocity[0] * t, cy0 + spec.velocity[1] * t
    cx = cx0 + spec.velocity[0] * t
    cy = cy0 + spec.amplitude * math.sin(2 * math.pi * t / spec.period)
    return cx, cy


def _clamp_center(spec, cx, cy):
    h, w = spec.frame_size
    th, tw = spec.target_size
    cx = min(max(cx, tw / 2.0), w - tw / 2.0)
    cy = min(max(cy, th / 2.0), h - th / 2.0)
    return cx, cy


def _render(spec, box, background, target, noise, rng):
    h, w = spec.frame_size
    frame = np.full((h, w), float(background))
    x1 = int(round(box.x))
    y1 = int(round(box.y))
    x2 = int(round(box.x2))
    y2 = int(round(box.y2))
    frame[max(y1, 0):min(y2, h), max(x1, 0):min(x2, w)] = float(target)
    if noise > 0:
        frame = frame + rng.normal(0.0, noise, size=frame.shape)
    frame = np.clip(frame, 0, 255).astype(np.uint8)
    return np.repeat(frame[:, :, None], 3, axis=2)


def synth_sequence(spec, seed, name="synthetic"):
    spec.validate()
    rng = np.random.default_rng(seed)
    frames_rgb, frames_tir, gt, attributes = [], [], [], []
    th, tw = spec.target_size
    for t in range(spec.num_frames):
        cx, cy = _clamp_center(spec, *_center_at(spec, t))
        box = BBox.from_center(cx, cy, tw, th)
        attrs = [a for lo, hi, a in spec.segments if lo <= t < hi]
        rgb_target = (spec.rgb_background
                      if ATTR_LOW_ILLUMINATION in attrs else spec.rgb_target)
        tir_target = (spec.tir_background
                      if ATTR_THERMAL_CROSSOVER in attrs else spec.tir_target)
        frames_rgb.append(_render(spec, box, spec.rgb_background, rgb_target,
                                  spec.noise, rng))
        frames_tir.append(_render(spec, box, spec.tir_background, tir_target,
                                  spec.noise, rng))
        gt.append(box)
        attributes.append(attrs)
    return SequenceRecord(name=name, frames_rgb=frames_rgb,
                          frames_tir=frames_tir, gt=gt, attributes=attributes)
