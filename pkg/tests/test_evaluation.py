"""Detection evaluation against a brute-force reimplementation.

The oracle below recomputes the 101-point interpolated AP with plain loops:
for every recall sample, scan the raw precision/recall points and take the
best precision at or beyond that recall. No envelope trick, no searchsorted.
"""

import json

import numpy as np
import pytest

from regionadapt import (
    BoundingBox,
    DetectionRecord,
    GroundTruthRecord,
    average_precision,
    evaluate,
    iou,
    match_detections,
)
from regionadapt.evaluation import (
    IOU_THRESHOLDS,
    read_ground_truth,
    write_ground_truth,
)
from regionadapt.records import box_sort_key

from _synth import make_vocab


def oracle_ap(flags, n_gt):
    if n_gt == 0:
        return None
    if not flags:
        return 0.0
    tp = fp = 0
    points = []
    for flag in flags:
        tp += bool(flag)
        fp += not flag
        points.append((tp / n_gt, tp / (tp + fp)))
    total = 0.0
    # Same standard sample grid as the library (linspace, not k/100: the two
    # differ by one ulp at some points, enough to flip a recall >= r tie).
    for r in np.linspace(0.0, 1.0, 101):
        best = 0.0
        for recall, precision in points:
            if recall >= r and precision > best:
                best = precision
        total += best
    return total / 101.0


def oracle_class_ap(dets, gts, thresh):
    """Greedy per-image matching plus oracle_ap, all in plain Python."""
    if not gts:
        return None
    by_img_d, by_img_g = {}, {}
    for d in dets:
        by_img_d.setdefault(d.image_id, []).append(d)
    for g in gts:
        by_img_g.setdefault(g.image_id, []).append(g)
    scored = []
    for image_id, image_dets in by_img_d.items():
        image_gts = by_img_g.get(image_id, [])
        used = [False] * len(image_gts)
        ordered = sorted(image_dets, key=lambda r: (-r.score, box_sort_key(r.box)))
        for d in ordered:
            best_j, best_o = -1, 0.0
            for j, g in enumerate(image_gts):
                if used[j]:
                    continue
                o = iou(d.box, g.box)
                if o >= thresh and o > best_o:
                    best_o, best_j = o, j
            if best_j >= 0:
                used[best_j] = True
            scored.append((d.score, image_id, box_sort_key(d.box), best_j >= 0))
    scored.sort(key=lambda t: (-t[0], t[1], t[2]))
    return oracle_ap([t[3] for t in scored], len(gts))


def _box(x, y, w, h):
    return BoundingBox(x, y, x + w, y + h)


def _gt(image_id, box, class_id):
    return GroundTruthRecord(image_id, box, class_id)


def _det(image_id, box, score, class_id):
    return DetectionRecord(image_id, box, score, class_id)


class TestAveragePrecision:
    def test_hand_worked_case(self):
        # TP, FP, TP against two ground truths:
        #   recalls   0.5, 0.5, 1.0
        #   precision 1.0, 0.5, 2/3
        # 51 samples see precision 1, the remaining 50 see 2/3.
        ap = average_precision([True, False, True], 2)
        assert ap == pytest.approx(253 / 303, abs=1e-12)

    def test_no_ground_truth_is_excluded_not_zero(self):
        assert average_precision([True, False], 0) is None

    def test_no_detections(self):
        assert average_precision([], 3) == 0.0

    def test_perfect_run(self):
        assert average_precision([True] * 4, 4) == 1.0

    def test_all_false(self):
        assert average_precision([False] * 5, 2) == 0.0

    def test_missed_recall_tail(self):
        # One TP out of two GTs: half the samples see precision 1, rest 0.
        ap = average_precision([True], 2)
        assert ap == pytest.approx(51 / 101, abs=1e-12)

    def test_trailing_false_positives_cannot_change_ap(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            flags = list(rng.random(rng.integers(1, 12)) < 0.5)
            n_gt = int(max(1, sum(flags)))
            base = average_precision(flags, n_gt)
            assert average_precision(flags + [False, False], n_gt) == base

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(99)
        for _ in range(200):
            n = int(rng.integers(0, 15))
            flags = list(rng.random(n) < rng.uniform(0.2, 0.9))
            n_gt = int(rng.integers(max(1, sum(flags)), max(2, sum(flags) + 4)))
            got = average_precision(flags, n_gt)
            want = oracle_ap(flags, n_gt)
            assert got == pytest.approx(want, abs=1e-12)


class TestMatchDetections:
    def test_single_match(self):
        dets = [_det("i", _box(0, 0, 10, 10), 0.9, 0)]
        gts = [_gt("i", _box(0, 0, 10, 10), 0)]
        assert match_detections(dets, gts, 0.5) == [True]

    def test_below_threshold(self):
        dets = [_det("i", _box(0, 0, 10, 10), 0.9, 0)]
        gts = [_gt("i", _box(8, 8, 10, 10), 0)]
        assert match_detections(dets, gts, 0.5) == [False]

    def test_higher_score_claims_the_ground_truth(self):
        gt_box = _box(0, 0, 10, 10)
        weak = _det("i", gt_box, 0.3, 0)
        strong = _det("i", _box(0.5, 0.5, 10, 10), 0.8, 0)
        flags = match_detections([weak, strong], [_gt("i", gt_box, 0)], 0.5)
        # Flags stay in input order; the stronger (second) one matched.
        assert flags == [False, True]

    def test_each_gt_matches_once(self):
        gt_box = _box(0, 0, 10, 10)
        dets = [_det("i", gt_box, s, 0) for s in (0.9, 0.8, 0.7)]
        flags = match_detections(dets, [_gt("i", gt_box, 0)], 0.5)
        assert flags == [True, False, False]

    def test_prefers_highest_iou(self):
        near = _gt("i", _box(0, 0, 10, 10), 0)
        far = _gt("i", _box(4, 0, 10, 10), 0)
        det = _det("i", _box(1, 0, 10, 10), 0.9, 0)
        assert iou(det.box, near.box) > iou(det.box, far.box)
        flags = match_detections([det], [far, near], 0.3)
        assert flags == [True]
        # A second detection can still claim the other ground truth.
        second = _det("i", _box(4, 0, 10, 10), 0.5, 0)
        assert match_detections([det, second], [far, near], 0.3) == [True, True]

    def test_empty_inputs(self):
        assert match_detections([], [], 0.5) == []
        assert match_detections([], [_gt("i", _box(0, 0, 5, 5), 0)], 0.5) == []


def _random_scene(rng, vocab, n_images=8, miss_rate=0.25, fp_per_image=2):
    gts, dets = [], []
    for i in range(n_images):
        image_id = f"s{i}"
        for _ in range(int(rng.integers(1, 5))):
            x, y = rng.uniform(0, 400, size=2)
            w, h = rng.uniform(40, 120, size=2)
            c = int(rng.integers(0, len(vocab)))
            box = _box(x, y, w, h)
            gts.append(_gt(image_id, box, c))
            if rng.random() >= miss_rate:
                dx, dy = rng.uniform(-6, 6, size=2)
                shifted = _box(x + dx, y + dy, w, h)
                dets.append(_det(image_id, shifted, float(rng.uniform(0.2, 1.0)), c))
        for _ in range(fp_per_image):
            x, y = rng.uniform(0, 400, size=2)
            w, h = rng.uniform(40, 120, size=2)
            dets.append(_det(image_id, _box(x, y, w, h),
                             float(rng.uniform(0.05, 1.0)),
                             int(rng.integers(0, len(vocab)))))
    return dets, gts


class TestEvaluate:
    def test_perfect_detections_score_one(self):
        vocab = make_vocab(2, 1)
        gts, dets = [], []
        for i in range(5):
            for c in range(3):
                box = _box(10 + 120 * c, 10, 90, 90)
                gts.append(_gt(f"im{i}", box, c))
                dets.append(_det(f"im{i}", box, 0.95, c))
        report = evaluate(dets, gts, vocab)
        for split in ("novel", "base", "all"):
            assert report.splits[split].ap == 1.0
            assert report.splits[split].ap50 == 1.0
            assert report.splits[split].ap75 == 1.0
        assert report.gt_count == 15 and report.det_count == 15

    def test_partial_overlap_counts_only_at_loose_thresholds(self):
        vocab = make_vocab(1, 1)
        gt_box = _box(0, 0, 10, 10)
        det_box = BoundingBox(0.0, 2.5, 10.0, 12.5)
        overlap = iou(gt_box, det_box)
        dets = [_det("i", det_box, 0.9, 0)]
        gts = [_gt("i", gt_box, 0)]
        report = evaluate(dets, gts, vocab)
        row = report.per_class["base_00"]
        assert row["ap50"] == 1.0
        assert row["ap75"] == 0.0
        expected_ap = np.mean([1.0 if overlap >= t else 0.0 for t in IOU_THRESHOLDS])
        assert row["ap"] == pytest.approx(expected_ap, abs=1e-12)

    def test_class_without_ground_truth_is_excluded(self):
        vocab = make_vocab(1, 1)
        gts = [_gt("i", _box(0, 0, 10, 10), 0)]
        dets = [_det("i", _box(0, 0, 10, 10), 0.9, 0),
                _det("i", _box(50, 50, 10, 10), 0.8, 1)]
        report = evaluate(dets, gts, vocab)
        assert report.per_class["novel_00"]["ap"] is None
        assert report.splits["novel"].num_classes == 0
        assert report.splits["novel"].ap == 0.0
        # The all-split mean skips the unscored class instead of averaging a zero.
        assert report.splits["all"].ap == report.splits["base"].ap

    def test_matches_full_oracle_on_random_scenes(self, rng):
        vocab = make_vocab(3, 2)
        for _ in range(15):
            dets, gts = _random_scene(rng, vocab)
            report = evaluate(dets, gts, vocab)
            oracle_per_class = {}
            for c in range(len(vocab)):
                dc = [d for d in dets if d.class_id == c]
                gc = [g for g in gts if g.class_id == c]
                oracle_per_class[c] = {
                    "ap50": oracle_class_ap(dc, gc, 0.5),
                    "ap75": oracle_class_ap(dc, gc, 0.75),
                }
            for c in range(len(vocab)):
                row = report.per_class[vocab.name_of(c)]
                for key in ("ap50", "ap75"):
                    want = oracle_per_class[c][key]
                    if want is None:
                        assert row[key] is None
                    else:
                        assert row[key] == pytest.approx(want, abs=1e-12)
            for name, ids in (("novel", sorted(vocab.novel_ids)),
                              ("base", sorted(vocab.base_ids)),
                              ("all", range(len(vocab)))):
                values = [oracle_per_class[c]["ap50"] for c in ids
                          if oracle_per_class[c]["ap50"] is not None]
                want = float(np.mean(values)) if values else 0.0
                assert report.splits[name].ap50 == pytest.approx(want, abs=1e-12)

    def test_duplicate_detections_penalized(self):
        vocab = make_vocab(1, 1)
        box = _box(0, 0, 10, 10)
        gts = [_gt("i", box, 0)]
        dets = [_det("i", box, 0.9, 0), _det("i", box, 0.8, 0)]
        report = evaluate(dets, gts, vocab)
        # Second hit on the same ground truth is a false positive; with the
        # single TP first, every sample still sees precision 1 at recall 1.
        assert report.per_class["base_00"]["ap50"] == 1.0
        dets_reversed_scores = [_det("i", box, 0.8, 0),
                                _det("i", _box(100, 100, 10, 10), 0.9, 0)]
        report2 = evaluate(dets_reversed_scores, gts, vocab)
        # Now the FP outranks the TP: precision at full recall is 1/2.
        assert report2.per_class["base_00"]["ap50"] == pytest.approx(0.5, abs=1e-12)

    def test_background_detection_rejected(self):
        vocab = make_vocab(1, 1)
        from regionadapt import BACKGROUND
        bad = DetectionRecord("i", _box(0, 0, 10, 10), 0.5, BACKGROUND)
        with pytest.raises(ValueError, match="invalid class id"):
            evaluate([bad], [], vocab)

    def test_out_of_range_ground_truth_rejected(self):
        vocab = make_vocab(1, 1)
        with pytest.raises(ValueError, match="invalid class id"):
            evaluate([], [_gt("i", _box(0, 0, 10, 10), 7)], vocab)

    def test_empty_everything(self):
        vocab = make_vocab(2, 1)
        report = evaluate([], [], vocab)
        assert report.splits["all"].ap == 0.0
        assert report.splits["all"].num_classes == 0

    def test_evaluation_uses_synthetic_world(self, vocab, eval_world):
        report = evaluate(eval_world.detections, eval_world.gts, vocab)
        # The closed-set detector never labels novel objects.
        assert report.splits["novel"].ap50 == 0.0
        assert report.splits["base"].ap50 > 0.5


class TestReportOutput:
    def _report(self):
        vocab = make_vocab(1, 1)
        box = _box(0, 0, 10, 10)
        return evaluate([_det("i", box, 0.9, 0)], [_gt("i", box, 0)], vocab)

    def test_table_layout(self):
        table = self._report().format_table()
        lines = table.splitlines()
        assert lines[0].split() == ["metric", "Novel", "Base", "All"]
        assert lines[2].startswith("AP")
        ap_row = lines[2].split()
        assert ap_row == ["AP", "0.00", "100.00", "100.00"]

    def test_json_round_trip(self, tmp_path):
        report = self._report()
        path = tmp_path / "report.json"
        report.write_json(path, provenance={"config_digest": "abc"})
        payload = json.loads(path.read_text())
        assert payload["splits"]["base"]["AP50"] == 1.0
        assert payload["provenance"]["config_digest"] == "abc"
        assert payload["gt_count"] == 1

    def test_to_dict_shape(self):
        d = self._report().to_dict()
        assert set(d) == {"splits", "per_class", "gt_count", "det_count"}
        assert set(d["splits"]) == {"novel", "base", "all"}


class TestGroundTruthFiles:
    def test_round_trip(self, tmp_path, vocab, eval_world):
        path = tmp_path / "gt.json"
        write_ground_truth(eval_world.gts, vocab, path)
        loaded = read_ground_truth(path, vocab)
        assert loaded == eval_world.gts

    def test_wrapped_records_form(self, tmp_path, vocab):
        payload = {"records": [
            {"image_id": "a", "bbox": [0, 0, 5, 5], "category": "base_00"},
        ]}
        path = tmp_path / "gt.json"
        path.write_text(json.dumps(payload))
        loaded = read_ground_truth(path, vocab)
        assert loaded == [_gt("a", _box(0, 0, 5, 5), 0)]

    def test_unknown_category_raises(self, tmp_path, vocab):
        path = tmp_path / "gt.json"
        path.write_text(json.dumps([
            {"image_id": "a", "bbox": [0, 0, 5, 5], "category": "mystery"},
        ]))
        with pytest.raises(KeyError, match="mystery"):
            read_ground_truth(path, vocab)
