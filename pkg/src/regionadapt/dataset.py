"""Pseudo-labeled region dataset construction from closed-set detector outputs.

Background proposals never enter the dataset; they are kept aside for the
cooperative inference stage. Every retained sample carries a base-class
pseudo-label, a clamped box and the producing detector's score.
"""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .provenance import canonical_json, digest_of
from .records import (
    BoundingBox,
    ClassVocabulary,
    DetectionRecord,
    ImageMeta,
    box_sort_key,
    clamp_box,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BuilderConfig:
    """Filtering knobs for dataset construction."""

    n_max: int = 80
    tau_conf: float = 0.7
    crop_size: int = 224

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")
        if not (0.0 <= self.tau_conf <= 1.0):
            raise ValueError(f"tau_conf must be in [0, 1], got {self.tau_conf}")
        if self.crop_size < 1:
            raise ValueError(f"crop_size must be >= 1, got {self.crop_size}")

    def to_dict(self) -> dict:
        return {"n_max": self.n_max, "tau_conf": self.tau_conf, "crop_size": self.crop_size}

    @classmethod
    def from_dict(cls, d: dict) -> "BuilderConfig":
        return cls(int(d["n_max"]), float(d["tau_conf"]), int(d["crop_size"]))


@dataclass(frozen=True)
class RegionSample:
    """One pseudo-labeled crop: clamped box, base-class label, detector score."""

    image_id: str
    box: BoundingBox
    pseudo_label: int
    detector_score: float
    crop_size: int


@dataclass
class RegionDataset:
    """Ordered pseudo-labeled samples plus the vocabulary and config that built them."""

    samples: list[RegionSample]
    vocabulary: ClassVocabulary
    builder_config: BuilderConfig
    provenance: dict = field(default_factory=dict)
    skipped_outside_image: int = 0

    def __len__(self) -> int:
        return len(self.samples)

    def sample_keys(self) -> list[str]:
        """Stable per-sample ids: '<image_id>#<ordinal within image>'.

        Embedding tables for this dataset align row k with key k; the same
        convention is reproduced by external feature exporters.
        """
        counters: Counter = Counter()
        keys = []
        for s in self.samples:
            keys.append(f"{s.image_id}#{counters[s.image_id]}")
            counters[s.image_id] += 1
        return keys


def build_dataset(detections, images, vocab: ClassVocabulary,
                  config: BuilderConfig) -> RegionDataset:
    """Filter, rank and clamp detector outputs into a region dataset.

    Keeps non-background records with score >= tau_conf, at most n_max per
    image (ties at the cut break by class id, then box coordinates), clamps
    boxes to the image, and orders the output deterministically by image_id,
    then descending score, then class id, then box.
    """
    meta_by_id = {m.image_id: m for m in images}
    per_image: dict[str, list[DetectionRecord]] = defaultdict(list)
    skipped = 0

    for rec in detections:
        if rec.image_id not in meta_by_id:
            raise ValueError(f"detection references unknown image_id {rec.image_id!r}")
        if rec.is_background:
            continue
        if rec.class_id >= len(vocab):
            raise ValueError(f"detection class id {rec.class_id} outside vocabulary")
        if not vocab.is_base(rec.class_id):
            raise ValueError(
                f"closed-set detection carries novel label {vocab.name_of(rec.class_id)!r}")
        if rec.score < config.tau_conf:
            continue
        per_image[rec.image_id].append(rec)

    samples: list[RegionSample] = []
    for image_id in sorted(per_image):
        meta = meta_by_id[image_id]
        # Retention rank: top-n_max by score, ties at the cut by class id then box.
        ranked = sorted(per_image[image_id],
                        key=lambda r: (-r.score, r.class_id, box_sort_key(r.box)))
        kept: list[RegionSample] = []
        for rec in ranked:
            if len(kept) >= config.n_max:
                break
            try:
                box = clamp_box(rec.box, meta)
            except ValueError:
                skipped += 1
                continue
            kept.append(RegionSample(
                image_id=image_id,
                box=box,
                pseudo_label=rec.class_id,
                detector_score=rec.score,
                crop_size=config.crop_size,
            ))
        # Output order within the image: descending score, then box, then label.
        kept.sort(key=lambda s: (-s.detector_score, box_sort_key(s.box), s.pseudo_label))
        samples.extend(kept)

    if skipped:
        log.warning("skipped %d zero-area boxes that fell outside their image", skipped)

    return RegionDataset(
        samples=samples,
        vocabulary=vocab,
        builder_config=config,
        skipped_outside_image=skipped,
    )


def dataset_stats(ds: RegionDataset) -> dict:
    """Exact sample counts: total, per class, per image."""
    per_class: Counter = Counter(s.pseudo_label for s in ds.samples)
    per_image: Counter = Counter(s.image_id for s in ds.samples)
    return {
        "total": len(ds.samples),
        "per_class": {ds.vocabulary.name_of(c): n for c, n in sorted(per_class.items())},
        "per_image": dict(sorted(per_image.items())),
        "images": len(per_image),
        "skipped_outside_image": ds.skipped_outside_image,
    }


def _manifest_payload(ds: RegionDataset) -> dict:
    return {
        "config": ds.builder_config.to_dict(),
        "vocab": ds.vocabulary.to_dict(),
        "samples": [
            {
                "image_id": s.image_id,
                "bbox": s.box.as_list(),
                "label": ds.vocabulary.name_of(s.pseudo_label),
                "score": s.detector_score,
            }
            for s in ds.samples
        ],
        "provenance": ds.provenance,
    }


def manifest_digest(ds: RegionDataset) -> str:
    return digest_of(_manifest_payload(ds))


def write_manifest(ds: RegionDataset, path) -> str:
    """Write the dataset manifest JSON; returns its content digest."""
    payload = _manifest_payload(ds)
    payload["digest"] = digest_of(payload)
    Path(path).write_text(canonical_json(payload) + "\n", encoding="utf-8")
    return payload["digest"]


def read_manifest(path) -> RegionDataset:
    """Load a manifest back into a RegionDataset, verifying its digest."""
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    stored = payload.pop("digest", None)
    if stored is not None and stored != digest_of(payload):
        raise ValueError(f"manifest digest mismatch in {path}")
    vocab = ClassVocabulary.from_dict(payload["vocab"])
    config = BuilderConfig.from_dict(payload["config"])
    samples = [
        RegionSample(
            image_id=row["image_id"],
            box=BoundingBox(*[float(v) for v in row["bbox"]]),
            pseudo_label=vocab.id_of(row["label"]),
            detector_score=float(row["score"]),
            crop_size=config.crop_size,
        )
        for row in payload["samples"]
    ]
    return RegionDataset(samples=samples, vocabulary=vocab, builder_config=config,
                         provenance=payload.get("provenance", {}))
