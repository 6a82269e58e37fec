"""Domain value objects shared across the pipeline: boxes, detections, vocabularies."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

# Sentinel class id for proposals the closed-set detector could not label.
# Deliberately not a vocabulary index, so vocabulary size never includes it.
BACKGROUND = -1

BACKGROUND_NAME = "__background__"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in continuous pixel coordinates (x right, y down)."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        for v in (self.x_min, self.y_min, self.x_max, self.y_max):
            if not math.isfinite(v):
                raise ValueError(f"box coordinates must be finite, got {self}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"box corners out of order: {self}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class ImageMeta:
    """Size and source location of one image."""

    image_id: str
    width: int
    height: int
    path: str = ""

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image {self.image_id!r} has non-positive size "
                             f"{self.width}x{self.height}")


@dataclass(frozen=True)
class DetectionRecord:
    """One proposed or labeled box on an image.

    class_id is either a vocabulary index or BACKGROUND for proposals the
    closed-set detector left unlabeled.
    """

    image_id: str
    box: BoundingBox
    score: float
    class_id: int

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0, 1], got {self.score}")
        if self.class_id != BACKGROUND and self.class_id < 0:
            raise ValueError(f"invalid class id {self.class_id}")

    @property
    def is_background(self) -> bool:
        return self.class_id == BACKGROUND


class ClassVocabulary:
    """Ordered class names partitioned into base and novel index sets."""

    def __init__(self, names, base_ids, novel_ids):
        self.names = list(names)
        self.base_ids = frozenset(base_ids)
        self.novel_ids = frozenset(novel_ids)
        if len(set(self.names)) != len(self.names):
            raise ValueError("class names must be unique")
        all_ids = set(range(len(self.names)))
        if self.base_ids & self.novel_ids:
            raise ValueError("base and novel id sets overlap")
        if (self.base_ids | self.novel_ids) != all_ids:
            raise ValueError("base and novel ids must partition all class indices")
        self._index = {name: i for i, name in enumerate(self.names)}

    def __len__(self) -> int:
        return len(self.names)

    def __eq__(self, other) -> bool:
        return (isinstance(other, ClassVocabulary)
                and self.names == other.names
                and self.base_ids == other.base_ids
                and self.novel_ids == other.novel_ids)

    def id_of(self, name: str) -> int:
        if name not in self._index:
            raise KeyError(f"unknown category {name!r}")
        return self._index[name]

    def name_of(self, class_id: int) -> str:
        if class_id == BACKGROUND:
            return BACKGROUND_NAME
        return self.names[class_id]

    def is_base(self, class_id: int) -> bool:
        return class_id in self.base_ids

    def is_novel(self, class_id: int) -> bool:
        return class_id in self.novel_ids

    def split_of(self, class_id: int) -> str:
        return "base" if class_id in self.base_ids else "novel"

    def to_dict(self) -> dict:
        return {
            "names": self.names,
            "base_ids": sorted(self.base_ids),
            "novel_ids": sorted(self.novel_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassVocabulary":
        return cls(d["names"], d["base_ids"], d["novel_ids"])


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0/0 is defined as 0."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def clamp_box(box: BoundingBox, meta: ImageMeta) -> BoundingBox:
    """Clip a box to the image extent; zero remaining area is an error."""
    clamped = BoundingBox(
        min(max(box.x_min, 0.0), float(meta.width)),
        min(max(box.y_min, 0.0), float(meta.height)),
        min(max(box.x_max, 0.0), float(meta.width)),
        min(max(box.y_max, 0.0), float(meta.height)),
    )
    if clamped.area <= 0.0:
        raise ValueError(f"box {box.as_tuple()} lies outside image "
                         f"{meta.image_id!r} ({meta.width}x{meta.height})")
    return clamped


def box_sort_key(box: BoundingBox) -> tuple[float, float, float, float]:
    """Lexicographic ordering key used wherever ties must break deterministically."""
    return box.as_tuple()


def partition_background(records) -> tuple[list[DetectionRecord], list[DetectionRecord]]:
    """Split records into (labeled, background) lists, preserving order."""
    labeled = [r for r in records if not r.is_background]
    background = [r for r in records if r.is_background]
    return labeled, background


def detection_keys(records) -> list[str]:
    """Stable per-record ids: '<image_id>#<ordinal within image>'.

    Mirrors RegionDataset.sample_keys so embedding tables for a detection list
    can be checked for row alignment the same way as dataset tables.
    """
    counters: dict[str, int] = {}
    keys = []
    for r in records:
        k = counters.get(r.image_id, 0)
        keys.append(f"{r.image_id}#{k}")
        counters[r.image_id] = k + 1
    return keys


def record_to_dict(record: DetectionRecord, vocab: ClassVocabulary) -> dict:
    return {
        "image_id": record.image_id,
        "bbox": record.box.as_list(),
        "score": record.score,
        "category": vocab.name_of(record.class_id),
    }


def record_from_dict(d: dict, vocab: ClassVocabulary) -> DetectionRecord:
    category = d["category"]
    class_id = BACKGROUND if category == BACKGROUND_NAME else vocab.id_of(category)
    x0, y0, x1, y1 = d["bbox"]
    return DetectionRecord(
        image_id=d["image_id"],
        box=BoundingBox(float(x0), float(y0), float(x1), float(y1)),
        score=float(d["score"]),
        class_id=class_id,
    )


def read_detections(path, vocab: ClassVocabulary) -> list[DetectionRecord]:
    """Read a detection-record file.

    Accepts either a bare JSON array of records or an object of the form
    {"provenance": {...}, "records": [...]} as written by the CLI.
    """
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    if isinstance(payload, dict):
        payload = payload["records"]
    return [record_from_dict(d, vocab) for d in payload]


def write_detections(records, vocab: ClassVocabulary, path, provenance: dict | None = None):
    """Write detection records; with provenance the wrapped object form is used."""
    rows = [record_to_dict(r, vocab) for r in records]
    payload = rows if provenance is None else {"provenance": provenance, "records": rows}
    Path(path).write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n",
                          encoding="utf-8")


def read_image_metas(path) -> list[ImageMeta]:
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    return [ImageMeta(d["image_id"], int(d["width"]), int(d["height"]), d.get("path", ""))
            for d in payload]


def write_image_metas(metas, path):
    rows = [{"image_id": m.image_id, "width": m.width, "height": m.height, "path": m.path}
            for m in metas]
    Path(path).write_text(json.dumps(rows, sort_keys=True, separators=(",", ":")) + "\n",
                          encoding="utf-8")
