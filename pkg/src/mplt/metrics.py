"""Tracking metrics: center-error precision and IoU success curves."""

from dataclasses import dataclass, field

import numpy as np

from .boxes import cle, iou

PRECISION_THRESHOLD = 20.0
PRECISION_CURVE_MAX = 50
SUCCESS_STEPS = 21   # IoU thresholds 0, 0.05, ..., 1.0


def success_thresholds():
    return np.linspace(0.0, 1.0, SUCCESS_STEPS)


def precision_thresholds():
    return np.arange(0, PRECISION_CURVE_MAX + 1, dtype=float)


def _check_lengths(pred, gt):
    if len(pred) != len(gt):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs "
                         f"{len(gt)} ground-truth boxes")


def precision_rate(pred, gt, tau=PRECISION_THRESHOLD):
    """Fraction of frames whose center error is within `tau` pixels."""
    _check_lengths(pred, gt)
    errors = [cle(p, g) for p, g in zip(pred, gt)]
    return sum(e <= tau for e in errors) / len(errors)


def precision_curve(pred, gt):
    _check_lengths(pred, gt)
    errors = np.array([cle(p, g) for p, g in zip(pred, gt)])
    return np.array([(errors <= t).mean() for t in precision_thresholds()])


def success_curve(pred, gt):
    _check_lengths(pred, gt)
    overlaps = np.array([iou(p, g) for p, g in zip(pred, gt)])
    return np.array([(overlaps >= t).mean() for t in success_thresholds()])


def success_auc(pred, gt):
    """OTB-style AUC: mean of the 21-point success curve."""
    return float(success_curve(pred, gt).mean())


@dataclass
class EvalReport:
    pr: float
    sr: float
    precision: np.ndarray
    success: np.ndarray
    per_sequence: dict = field(default_factory=dict)
    fps: float = 0.0


def evaluate(results, fps=0.0):
    """Aggregate per-sequence (pred, gt) pairs into an EvalReport.

    `results` maps sequence name -> (pred boxes, gt boxes).  Curves and
    scalar metrics are averaged over sequences with equal weight.
    """
    if not results:
        raise ValueError("no sequences to evaluate")
    per_sequence = {}
    prec_curves, succ_curves = [], []
    for name, (pred, gt) in results.items():
        pc = precision_curve(pred, gt)
        sc = success_curve(pred, gt)
        per_sequence[name] = {"pr": precision_rate(pred, gt),
                              "sr": float(sc.mean())}
        prec_curves.append(pc)
        succ_curves.append(sc)
    precision = np.mean(prec_curves, axis=0)
    success = np.mean(succ_curves, axis=0)
    pr = float(np.mean([v["pr"] for v in per_sequence.values()]))
    sr = float(np.mean([v["sr"] for v in per_sequence.values()]))
    return EvalReport(pr=pr, sr=sr, precision=precision, success=success,
                      per_sequence=per_sequence, fps=fps)


def write_curve(path, thresholds, values):
    """Emit (threshold, value) pairs as delimited text for external plotting."""
    with open(path, "w", encoding="utf-8") as fh:
        for t, v in zip(thresholds, values):
            fh.write(f"{t:.6f}\t{v:.6f}\n")
