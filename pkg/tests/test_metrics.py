"""Metrics vs brute-force oracles, plus the synthetic generator contracts."""

import numpy as np
import pytest

from mplt import metrics, synth
from mplt.boxes import BBox, cle, iou


def random_boxes(rng, count, span=200.0):
    out = []
    for _ in range(count):
        x, y = rng.uniform(0, span, 2)
        w, h = rng.uniform(1, 80, 2)
        out.append(BBox(x, y, w, h))
    return out


class TestCle:
    def test_identical(self):
        b = BBox(3, 4, 5, 6)
        assert cle(b, b) == 0.0

    def test_3_4_5(self):
        a = BBox.from_center(5, 5, 2, 2)
        b = BBox.from_center(8, 9, 2, 2)
        assert cle(a, b) == pytest.approx(5.0)

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        for a, b in zip(random_boxes(rng, 50), random_boxes(rng, 50)):
            assert cle(a, b) == cle(b, a)


class TestIou:
    def test_identical(self):
        b = BBox(1, 1, 10, 10)
        assert iou(b, b) == pytest.approx(1.0)

    def test_half_overlap_third(self):
        assert iou(BBox(0, 0, 10, 10), BBox(5, 0, 10, 10)) \
            == pytest.approx(1.0 / 3.0)

    def test_disjoint(self):
        assert iou(BBox(0, 0, 1, 1), BBox(5, 5, 1, 1)) == 0.0


class TestPrecisionRate:
    def test_all_exact(self):
        boxes = random_boxes(np.random.default_rng(1), 20)
        assert metrics.precision_rate(boxes, boxes) == 1.0

    def test_half_within(self):
        gt = [BBox(0, 0, 10, 10)] * 10
        pred = [BBox(0, 0, 10, 10)] * 5 + [BBox(100, 0, 10, 10)] * 5
        assert metrics.precision_rate(pred, gt) == 0.5

    def test_brute_force_1000(self):
        rng = np.random.default_rng(2)
        pred = random_boxes(rng, 1000)
        gt = random_boxes(rng, 1000)
        expected = sum(
            1 for p, g in zip(pred, gt)
            if ((p.cx - g.cx) ** 2 + (p.cy - g.cy) ** 2) ** 0.5 <= 20.0
        ) / 1000
        assert metrics.precision_rate(pred, gt) == expected

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            metrics.precision_rate([BBox(0, 0, 1, 1)], [])


class TestSuccessAuc:
    def test_all_exact_is_one(self):
        boxes = random_boxes(np.random.default_rng(3), 20)
        assert metrics.success_auc(boxes, boxes) == pytest.approx(1.0)

    def test_all_zero_iou(self):
        gt = [BBox(0, 0, 1, 1)] * 8
        pred = [BBox(50, 50, 1, 1)] * 8
        assert metrics.success_auc(pred, gt) == pytest.approx(1.0 / 21.0)

    def test_brute_force_1000(self):
        rng = np.random.default_rng(4)
        pred = random_boxes(rng, 1000)
        gt = random_boxes(rng, 1000)

        def brute_iou(a, b):
            ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
            iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
            inter = ix * iy if ix > 0 and iy > 0 else 0.0
            return inter / (a.w * a.h + b.w * b.h - inter)

        overlaps = [brute_iou(p, g) for p, g in zip(pred, gt)]
        expected = np.mean([np.mean([o >= t for o in overlaps])
                            for t in np.linspace(0, 1, 21)])
        assert metrics.success_auc(pred, gt) == pytest.approx(expected,
                                                              abs=1e-15)

    def test_curve_monotone_non_increasing(self):
        rng = np.random.default_rng(5)
        curve = metrics.success_curve(random_boxes(rng, 200),
                                      random_boxes(rng, 200))
        assert np.all(np.diff(curve) <= 0)


class TestEvaluate:
    def test_equal_weight_sequences(self):
        g1 = [BBox(0, 0, 10, 10)] * 4
        g2 = [BBox(0, 0, 10, 10)] * 8
        report = metrics.evaluate({
            "a": (g1, g1),                              # PR 1.0
            "b": ([BBox(100, 0, 10, 10)] * 8, g2),      # PR 0.0
        })
        assert report.pr == pytest.approx(0.5)
        assert 0.0 <= report.sr <= 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            metrics.evaluate({})

    def test_write_curve(self, tmp_path):
        path = tmp_path / "curve.txt"
        metrics.write_curve(path, [0.0, 1.0], [1.0, 0.5])
        lines = path.read_text().strip().splitlines()
        assert lines[0].split("\t") == ["0.000000", "1.000000"]
        assert len(lines) == 2


class TestSynth:
    def test_static_gt_constant(self):
        spec = synth.SynthSpec(num_frames=10, trajectory="static")
        record = synth.synth_sequence(spec, seed=0)
        first = record.gt[0]
        for box in record.gt:
            assert box.x == first.x and box.y == first.y
            assert box.w == first.w and box.h == first.h

    def test_li_removes_rgb_contrast_keeps_tir(self):
        spec = synth.SynthSpec(num_frames=6, trajectory="static", noise=0.0,
                               segments=[(2, 4, "LI")])
        record = synth.synth_sequence(spec, seed=1)
        box = record.gt[2]
        ys = slice(int(box.y) + 2, int(box.y2) - 2)
        xs = slice(int(box.x) + 2, int(box.x2) - 2)
        rgb = record.frames_rgb[2].astype(float)
        tir = record.frames_tir[2].astype(float)
        assert abs(rgb[ys, xs].mean() - spec.rgb_background) < 1e-9
        assert abs(tir[ys, xs].mean() - spec.tir_target) < 1e-9
        # outside the segment the RGB target is visible again
        rgb_ok = record.frames_rgb[0].astype(float)
        assert abs(rgb_ok[ys, xs].mean() - spec.rgb_target) < 1e-9

    def test_tc_flattens_tir(self):
        spec = synth.SynthSpec(num_frames=4, trajectory="static", noise=0.0,
                               segments=[(1, 3, "TC")])
        record = synth.synth_sequence(spec, seed=2)
        box = record.gt[1]
        ys = slice(int(box.y) + 2, int(box.y2) - 2)
        xs = slice(int(box.x) + 2, int(box.x2) - 2)
        tir = record.frames_tir[1].astype(float)
        assert abs(tir[ys, xs].mean() - spec.tir_background) < 1e-9

    def test_determinism(self):
        spec = synth.SynthSpec(num_frames=5)
        a = synth.synth_sequence(spec, seed=7)
        b = synth.synth_sequence(spec, seed=7)
        for fa, fb in zip(a.frames_rgb + a.frames_tir,
                          b.frames_rgb + b.frames_tir):
            assert np.array_equal(fa, fb)

    def test_attribute_tags_recorded(self):
        spec = synth.SynthSpec(num_frames=5, segments=[(1, 3, "FL")])
        record = synth.synth_sequence(spec, seed=3)
        assert record.attributes[0] == []
        assert record.attributes[1] == ["FL"]
        assert record.attributes[2] == ["FL"]
        assert record.attributes[3] == []

    def test_invalid_spec_rejected(self):
        with pytest.raises(ValueError):
            synth.synth_sequence(
                synth.SynthSpec(segments=[(0, 5, "XX")]), seed=0)
        with pytest.raises(ValueError):
            synth.synth_sequence(
                synth.SynthSpec(trajectory="spiral"), seed=0)

    def test_gt_matches_analytic_trajectory(self):
        spec = synth.SynthSpec(num_frames=8, trajectory="linear",
                               start=(40.0, 40.0), velocity=(2.0, 1.0))
        record = synth.synth_sequence(spec, seed=4)
        for t, box in enumerate(record.gt):
            assert box.cx == pytest.approx(40.0 + 2.0 * t)
            assert box.cy == pytest.approx(40.0 + 1.0 * t)
