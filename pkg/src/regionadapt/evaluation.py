"""COCO-style detection evaluation built from first principles.

Per class and IoU threshold, detections are greedily matched to ground truth
in descending score order; average precision uses the 101-point interpolation
(right-to-left precision envelope sampled at recalls 0.00, 0.01, ..., 1.00).
AP averages thresholds 0.50:0.05:0.95; AP50 and AP75 fix a single threshold.
Classes without ground truth are excluded from split means, not scored zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .records import (
    BoundingBox,
    ClassVocabulary,
    DetectionRecord,
    box_sort_key,
    iou,
)

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_SAMPLES = np.linspace(0.0, 1.0, 101)


@dataclass(frozen=True)
class GroundTruthRecord:
    """An annotated box: like a detection but without a score."""

    image_id: str
    box: BoundingBox
    class_id: int


@dataclass
class SplitMetrics:
    ap: float
    ap50: float
    ap75: float
    num_classes: int

    def to_dict(self) -> dict:
        return {"AP": self.ap, "AP50": self.ap50, "AP75": self.ap75,
                "num_classes": self.num_classes}


@dataclass
class EvalReport:
    """AP metrics for the novel, base and all splits plus the per-class table."""

    splits: dict[str, SplitMetrics]
    per_class: dict[str, dict]
    gt_count: int
    det_count: int

    def to_dict(self) -> dict:
        return {
            "splits": {name: m.to_dict() for name, m in self.splits.items()},
            "per_class": self.per_class,
            "gt_count": self.gt_count,
            "det_count": self.det_count,
        }

    def write_json(self, path, provenance: dict | None = None) -> None:
        payload = self.to_dict()
        if provenance is not None:
            payload["provenance"] = provenance
        Path(path).write_text(
            json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n",
            encoding="utf-8")

    def format_table(self) -> str:
        """Human-readable Novel / Base / All table (values scaled by 100)."""
        header = f"{'metric':<8}{'Novel':>10}{'Base':>10}{'All':>10}"
        lines = [header, "-" * len(header)]
        for metric in ("AP", "AP50", "AP75"):
            row = f"{metric:<8}"
            for split in ("novel", "base", "all"):
                value = self.splits[split].to_dict()[metric]
                row += f"{100.0 * value:>10.2f}"
            lines.append(row)
        return "\n".join(lines)


def match_detections(dets, gts, iou_thresh: float) -> list[bool]:
    """TP/FP flags for one class on one image.

    Detections are processed in descending score order; each matches the
    still-unmatched ground truth with the highest IoU at or above the
    threshold, ties broken by ground-truth order.
    """
    order = sorted(range(len(dets)),
                   key=lambda i: (-dets[i].score, box_sort_key(dets[i].box)))
    matched_gt = [False] * len(gts)
    flags = [False] * len(dets)
    for i in order:
        best_iou, best_j = 0.0, -1
        for j, gt in enumerate(gts):
            if matched_gt[j]:
                continue
            overlap = iou(dets[i].box, gt.box)
            if overlap >= iou_thresh and overlap > best_iou:
                best_iou, best_j = overlap, j
        if best_j >= 0:
            matched_gt[best_j] = True
            flags[i] = True
    return flags


def average_precision(flags, n_gt: int) -> float | None:
    """101-point interpolated AP from score-ordered TP/FP flags.

    Returns None when the class has no ground truth, so callers exclude it
    from averages instead of counting a zero.
    """
    if n_gt == 0:
        return None
    flags = np.asarray(flags, dtype=bool)
    if flags.size == 0:
        return 0.0
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    recall = tp / n_gt
    precision = tp / (tp + fp)
    # Right-to-left envelope, then sample at the fixed recall grid.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_SAMPLES, side="left")
    sampled = np.where(idx < envelope.size, envelope[np.minimum(idx, envelope.size - 1)], 0.0)
    return float(sampled.mean())


def _class_ap_by_threshold(dets, gts, thresholds) -> dict[float, float | None]:
    """AP per IoU threshold for one class across all images."""
    n_gt = len(gts)
    dets_by_image: dict[str, list[DetectionRecord]] = {}
    gts_by_image: dict[str, list[GroundTruthRecord]] = {}
    for d in dets:
        dets_by_image.setdefault(d.image_id, []).append(d)
    for g in gts:
        gts_by_image.setdefault(g.image_id, []).append(g)

    result = {}
    for thresh in thresholds:
        scored: list[tuple[float, str, tuple, bool]] = []
        for image_id, image_dets in dets_by_image.items():
            flags = match_detections(image_dets, gts_by_image.get(image_id, []), thresh)
            for i in range(len(image_dets)):
                scored.append((image_dets[i].score, image_id,
                               box_sort_key(image_dets[i].box), flags[i]))
        scored.sort(key=lambda row: (-row[0], row[1], row[2]))
        result[thresh] = average_precision([row[3] for row in scored], n_gt)
    return result


def _split_mean(per_class: dict[int, dict], class_ids, key: str) -> float:
    values = [per_class[c][key] for c in class_ids
              if c in per_class and per_class[c][key] is not None]
    return float(np.mean(values)) if values else 0.0


def evaluate(dets, gts, vocab: ClassVocabulary,
             thresholds=IOU_THRESHOLDS) -> EvalReport:
    """Full evaluation over every class and IoU threshold, reported per split."""
    dets = list(dets)
    gts = list(gts)
    for rec in dets:
        if rec.is_background or rec.class_id >= len(vocab):
            raise ValueError(f"detection with invalid class id {rec.class_id}")
    for gt in gts:
        if gt.class_id < 0 or gt.class_id >= len(vocab):
            raise ValueError(f"ground truth with invalid class id {gt.class_id}")

    per_class: dict[int, dict] = {}
    for c in range(len(vocab)):
        class_dets = [d for d in dets if d.class_id == c]
        class_gts = [g for g in gts if g.class_id == c]
        if not class_gts:
            # No ground truth: the class never enters a mean.
            per_class[c] = {"ap": None, "ap50": None, "ap75": None,
                            "n_gt": 0, "n_det": len(class_dets)}
            continue
        by_thresh = _class_ap_by_threshold(class_dets, class_gts, thresholds)
        values = [by_thresh[t] for t in thresholds]
        per_class[c] = {
            "ap": float(np.mean(values)),
            "ap50": by_thresh.get(0.5),
            "ap75": by_thresh.get(0.75),
            "n_gt": len(class_gts),
            "n_det": len(class_dets),
        }

    splits = {}
    for name, ids in (("novel", sorted(vocab.novel_ids)),
                      ("base", sorted(vocab.base_ids)),
                      ("all", range(len(vocab)))):
        ids = list(ids)
        scored = [c for c in ids if per_class[c]["ap"] is not None]
        splits[name] = SplitMetrics(
            ap=_split_mean(per_class, ids, "ap"),
            ap50=_split_mean(per_class, ids, "ap50"),
            ap75=_split_mean(per_class, ids, "ap75"),
            num_classes=len(scored),
        )

    return EvalReport(
        splits=splits,
        per_class={vocab.name_of(c): stats for c, stats in per_class.items()},
        gt_count=len(gts),
        det_count=len(dets),
    )


def read_ground_truth(path, vocab: ClassVocabulary) -> list[GroundTruthRecord]:
    """Ground-truth JSON: detection-record shape without scores."""
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    if isinstance(payload, dict):
        payload = payload["records"]
    out = []
    for row in payload:
        x0, y0, x1, y1 = row["bbox"]
        out.append(GroundTruthRecord(
            image_id=row["image_id"],
            box=BoundingBox(float(x0), float(y0), float(x1), float(y1)),
            class_id=vocab.id_of(row["category"]),
        ))
    return out


def write_ground_truth(gts, vocab: ClassVocabulary, path) -> None:
    rows = [{"image_id": g.image_id, "bbox": g.box.as_list(),
             "category": vocab.name_of(g.class_id)} for g in gts]
    Path(path).write_text(json.dumps(rows, sort_keys=True, separators=(",", ":")) + "\n",
                          encoding="utf-8")
