"""Geometry, record types, vocabulary and their JSON file formats."""

import json
import math

import numpy as np
import pytest

from regionadapt import (
    BACKGROUND,
    BoundingBox,
    ClassVocabulary,
    DetectionRecord,
    ImageMeta,
    clamp_box,
    detection_keys,
    iou,
    read_detections,
    read_image_metas,
    write_detections,
    write_image_metas,
)
from regionadapt.records import (
    BACKGROUND_NAME,
    box_sort_key,
    partition_background,
    record_from_dict,
    record_to_dict,
)


class TestBoundingBox:
    def test_area(self):
        assert BoundingBox(0, 0, 2, 3).area == 6.0
        assert BoundingBox(1, 1, 1, 1).area == 0.0

    def test_corner_order_enforced(self):
        with pytest.raises(ValueError, match="out of order"):
            BoundingBox(2, 0, 1, 1)
        with pytest.raises(ValueError, match="out of order"):
            BoundingBox(0, 5, 1, 1)

    @pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
    def test_rejects_non_finite(self, bad):
        with pytest.raises(ValueError, match="finite"):
            BoundingBox(0, 0, bad, 1)

    def test_round_trip_views(self):
        box = BoundingBox(0.5, 1.5, 2.5, 3.5)
        assert box.as_list() == [0.5, 1.5, 2.5, 3.5]
        assert box.as_tuple() == (0.5, 1.5, 2.5, 3.5)
        assert box_sort_key(box) == box.as_tuple()


class TestIou:
    def test_unit_overlap_case(self):
        # 1x1 intersection over 4 + 4 - 1 union.
        assert iou(BoundingBox(0, 0, 2, 2), BoundingBox(1, 1, 3, 3)) == pytest.approx(1 / 7)

    def test_disjoint_is_zero(self):
        assert iou(BoundingBox(0, 0, 1, 1), BoundingBox(5, 5, 6, 6)) == 0.0

    def test_identical_is_one(self):
        box = BoundingBox(2, 3, 10, 12)
        assert iou(box, box) == 1.0

    def test_degenerate_pair_is_zero(self):
        # Zero-area boxes: 0/0 is defined as 0, not an error.
        a = BoundingBox(1, 1, 1, 1)
        assert iou(a, a) == 0.0

    def test_symmetry(self, rng):
        for _ in range(50):
            x = rng.uniform(0, 50, size=8)
            a = BoundingBox(x[0], x[1], x[0] + x[2], x[1] + x[3])
            b = BoundingBox(x[4], x[5], x[4] + x[6], x[5] + x[7])
            assert iou(a, b) == iou(b, a)
            assert 0.0 <= iou(a, b) <= 1.0

    def test_touching_edges_is_zero(self):
        assert iou(BoundingBox(0, 0, 1, 1), BoundingBox(1, 0, 2, 1)) == 0.0


class TestClampBox:
    def test_clip_at_origin(self):
        meta = ImageMeta("im", 100, 100, "")
        assert clamp_box(BoundingBox(-5, -5, 10, 10), meta) == BoundingBox(0, 0, 10, 10)

    def test_clip_at_far_edge(self):
        meta = ImageMeta("im", 100, 80, "")
        assert clamp_box(BoundingBox(90, 70, 120, 95), meta) == BoundingBox(90, 70, 100, 80)

    def test_inside_box_unchanged(self):
        meta = ImageMeta("im", 100, 100, "")
        box = BoundingBox(10, 10, 20, 20)
        assert clamp_box(box, meta) == box

    def test_fully_outside_rejected(self):
        meta = ImageMeta("im", 100, 100, "")
        with pytest.raises(ValueError):
            clamp_box(BoundingBox(110, 0, 120, 10), meta)

    def test_ordering_preserved(self, rng):
        meta = ImageMeta("im", 64, 64, "")
        for _ in range(100):
            x = rng.uniform(-20, 80, size=2)
            w = rng.uniform(1, 40, size=2)
            box = BoundingBox(x[0], x[1], x[0] + w[0], x[1] + w[1])
            overlaps = (min(box.x_max, 64) > max(box.x_min, 0)
                        and min(box.y_max, 64) > max(box.y_min, 0))
            if not overlaps:
                with pytest.raises(ValueError):
                    clamp_box(box, meta)
                continue
            out = clamp_box(box, meta)
            assert out.x_min <= out.x_max and out.y_min <= out.y_max
            assert 0 <= out.x_min and out.x_max <= 64
            assert 0 <= out.y_min and out.y_max <= 64


class TestDetectionRecord:
    def test_score_bounds(self):
        box = BoundingBox(0, 0, 1, 1)
        with pytest.raises(ValueError, match="score"):
            DetectionRecord("im", box, 1.5, 0)
        with pytest.raises(ValueError, match="score"):
            DetectionRecord("im", box, -0.1, 0)

    def test_background_sentinel(self):
        box = BoundingBox(0, 0, 1, 1)
        rec = DetectionRecord("im", box, 0.5, BACKGROUND)
        assert rec.is_background
        assert not DetectionRecord("im", box, 0.5, 3).is_background
        with pytest.raises(ValueError, match="class id"):
            DetectionRecord("im", box, 0.5, -2)

    def test_partition_preserves_order(self):
        box = BoundingBox(0, 0, 1, 1)
        recs = [DetectionRecord("a", box, 0.9, 1),
                DetectionRecord("a", box, 0.8, BACKGROUND),
                DetectionRecord("b", box, 0.7, 0)]
        labeled, background = partition_background(recs)
        assert [r.score for r in labeled] == [0.9, 0.7]
        assert [r.score for r in background] == [0.8]

    def test_detection_keys_count_per_image(self):
        box = BoundingBox(0, 0, 1, 1)
        recs = [DetectionRecord("a", box, 0.9, 0),
                DetectionRecord("b", box, 0.8, 0),
                DetectionRecord("a", box, 0.7, 1)]
        assert detection_keys(recs) == ["a#0", "b#0", "a#1"]


class TestClassVocabulary:
    def test_lookup_round_trip(self, vocab):
        for i, name in enumerate(vocab.names):
            assert vocab.id_of(name) == i
            assert vocab.name_of(i) == name

    def test_background_name(self, vocab):
        assert vocab.name_of(BACKGROUND) == BACKGROUND_NAME

    def test_split_membership(self, vocab):
        assert vocab.is_base(0) and not vocab.is_novel(0)
        top = len(vocab) - 1
        assert vocab.is_novel(top) and not vocab.is_base(top)
        assert vocab.split_of(0) == "base"
        assert vocab.split_of(top) == "novel"

    def test_unknown_name_raises(self, vocab):
        with pytest.raises(KeyError):
            vocab.id_of("no_such_class")

    def test_partition_must_cover(self):
        with pytest.raises(ValueError, match="partition"):
            ClassVocabulary(["a", "b", "c"], base_ids=[0], novel_ids=[2])

    def test_partition_must_not_overlap(self):
        with pytest.raises(ValueError, match="overlap"):
            ClassVocabulary(["a", "b"], base_ids=[0, 1], novel_ids=[1])

    def test_names_must_be_unique(self):
        with pytest.raises(ValueError, match="unique"):
            ClassVocabulary(["a", "a"], base_ids=[0], novel_ids=[1])

    def test_dict_round_trip(self, vocab):
        assert ClassVocabulary.from_dict(vocab.to_dict()) == vocab


class TestRecordFiles:
    def test_record_dict_round_trip(self, vocab):
        rec = DetectionRecord("im", BoundingBox(1, 2, 3, 4), 0.75, 2)
        assert record_from_dict(record_to_dict(rec, vocab), vocab) == rec

    def test_background_category_round_trip(self, vocab):
        rec = DetectionRecord("im", BoundingBox(1, 2, 3, 4), 0.75, BACKGROUND)
        d = record_to_dict(rec, vocab)
        assert d["category"] == BACKGROUND_NAME
        assert record_from_dict(d, vocab) == rec

    def test_bare_array_and_wrapped_forms(self, tmp_path, vocab):
        recs = [DetectionRecord("im", BoundingBox(0, 0, 5, 5), 0.9, 0),
                DetectionRecord("im", BoundingBox(1, 1, 6, 6), 0.4, BACKGROUND)]
        bare = tmp_path / "bare.json"
        wrapped = tmp_path / "wrapped.json"
        write_detections(recs, vocab, bare)
        write_detections(recs, vocab, wrapped, provenance={"origin": "test"})

        assert isinstance(json.loads(bare.read_text()), list)
        payload = json.loads(wrapped.read_text())
        assert payload["provenance"] == {"origin": "test"}
        assert read_detections(bare, vocab) == recs
        assert read_detections(wrapped, vocab) == recs

    def test_image_meta_round_trip(self, tmp_path):
        metas = [ImageMeta("a", 640, 480, "a.ppm"), ImageMeta("b", 32, 32, "")]
        path = tmp_path / "images.json"
        write_image_metas(metas, path)
        assert read_image_metas(path) == metas

    def test_detection_write_is_deterministic(self, tmp_path, vocab):
        recs = [DetectionRecord("im", BoundingBox(0, 0, 5, 5), 1 / 3, 0)]
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        write_detections(recs, vocab, a)
        write_detections(recs, vocab, b)
        assert a.read_bytes() == b.read_bytes()
        # Full float precision must survive the round trip.
        assert read_detections(a, vocab)[0].score == 1 / 3


class TestSyntheticWorlds:
    def test_detector_is_closed_set(self, small_world, vocab):
        assert all(vocab.is_base(d.class_id) for d in small_world.detections)

    def test_proposals_are_unlabeled(self, eval_world):
        assert all(p.is_background for p in eval_world.proposals)

    def test_world_is_seed_deterministic(self, vocab):
        from _synth import make_world
        a = make_world(5, vocab, n_images=4)
        b = make_world(5, vocab, n_images=4)
        assert a.detections == b.detections
        assert a.gts == b.gts
        assert a.proposals == b.proposals
