"""Cooperative deployment stage: classify background proposals, fuse, suppress.

Background boxes the closed-set detector could not label are scored against
every class embedding with the adapted head; the winning class replaces the
background sentinel and the refined score is sigmoid(best logit), optionally
damped by the proposal's own objectness. The relabeled stream is then merged
with the closed-set detections by score filtering and class-wise greedy NMS.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .embeddings import EmbeddingTable
from .head import HeadParameters, head_forward, pair_logits
from .records import ClassVocabulary, DetectionRecord, box_sort_key, iou


@dataclass(frozen=True)
class FusionConfig:
    nms_iou: float = 0.5
    min_score: float = 0.05
    use_objectness: bool = True

    def __post_init__(self):
        if not (0.0 <= self.nms_iou <= 1.0):
            raise ValueError(f"nms_iou must be in [0, 1], got {self.nms_iou}")
        if not (0.0 <= self.min_score <= 1.0):
            raise ValueError(f"min_score must be in [0, 1], got {self.min_score}")

    def to_dict(self) -> dict:
        return {"nms_iou": self.nms_iou, "min_score": self.min_score,
                "use_objectness": self.use_objectness}

    @classmethod
    def from_dict(cls, d: dict) -> "FusionConfig":
        return cls(float(d["nms_iou"]), float(d["min_score"]), bool(d["use_objectness"]))


def classify_regions(bg_records, bg_features: EmbeddingTable,
                     text_emb: EmbeddingTable, theta: HeadParameters,
                     vocab: ClassVocabulary,
                     use_objectness: bool = True) -> list[DetectionRecord]:
    """Replace the background sentinel with the best-matching class per region."""
    bg_records = list(bg_records)
    if bg_features.rows != len(bg_records):
        raise ValueError(f"{bg_features.rows} feature rows for {len(bg_records)} "
                         "background records")
    for rec in bg_records:
        if not rec.is_background:
            raise ValueError("classify_regions expects background records only")
    if not bg_records:
        return []
    if text_emb.rows != len(vocab):
        raise ValueError(f"text table has {text_emb.rows} rows for a "
                         f"{len(vocab)}-class vocabulary")

    class_rows = np.array([vocab.id_of(name) for name in text_emb.item_ids])
    v = head_forward(bg_features.data.astype(np.float64), theta)
    z = pair_logits(v, text_emb.data.astype(np.float64), theta.log_t, theta.b)

    out = []
    best = z.argmax(axis=1)
    for i, rec in enumerate(bg_records):
        score = float(expit(z[i, best[i]]))
        if use_objectness:
            score *= rec.score
        out.append(DetectionRecord(
            image_id=rec.image_id,
            box=rec.box,
            score=score,
            class_id=int(class_rows[best[i]]),
        ))
    return out


def nms(records, iou_thresh: float) -> list[DetectionRecord]:
    """Greedy class-wise suppression per image; kept records stay score-ordered."""
    groups: dict[tuple[str, int], list[DetectionRecord]] = {}
    for rec in records:
        groups.setdefault((rec.image_id, rec.class_id), []).append(rec)

    kept: list[DetectionRecord] = []
    for key in sorted(groups):
        candidates = sorted(groups[key], key=lambda r: (-r.score, box_sort_key(r.box)))
        survivors: list[DetectionRecord] = []
        for rec in candidates:
            if all(iou(rec.box, s.box) <= iou_thresh for s in survivors):
                survivors.append(rec)
        kept.extend(survivors)
    kept.sort(key=lambda r: (-r.score, r.image_id, box_sort_key(r.box), r.class_id))
    return kept


def fuse(closed_set, vlm_labeled, cfg: FusionConfig) -> list[DetectionRecord]:
    """Merge both detection streams: score floor, class-wise NMS, stable order."""
    merged = list(closed_set) + list(vlm_labeled)
    for rec in merged:
        if rec.is_background:
            raise ValueError("fuse expects fully labeled records; classify first")
    merged = [r for r in merged if r.score >= cfg.min_score]
    return nms(merged, cfg.nms_iou)
