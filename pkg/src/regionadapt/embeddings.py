"""Frozen feature tables: binary interchange format, synthetic generation, prompts.

The interchange format is little-endian and bit-exact:

    magic "DATE" | u32 version=1 | u32 n | u32 d | u8 normalized
    | n*d float32 row-major | u32 json_len | UTF-8 JSON array of item ids

Row ids align rows with region-sample keys (dataset.sample_keys()) or with
class names, so any producer in any language can emit tables the trainer and
inference stages accept.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"DATE"
FORMAT_VERSION = 1

_NORM_TOL = 1e-5

# Fixed sub-stream tags so every synthetic draw has its own seed sequence.
_CLASS_STREAM = 1
_REGION_STREAM = 2
_ROTATION_STREAM = 3
_PROPOSAL_STREAM = 4


class EmbeddingFormatError(ValueError):
    """Raised for malformed interchange files."""


@dataclass
class EmbeddingTable:
    """Dense float32 feature matrix with one id per row."""

    data: np.ndarray
    item_ids: list[str]
    normalized: bool = False

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise ValueError(f"embedding data must be 2-D, got shape {self.data.shape}")
        self.item_ids = [str(i) for i in self.item_ids]
        if len(self.item_ids) != self.data.shape[0]:
            raise ValueError(
                f"item id count {len(self.item_ids)} != row count {self.data.shape[0]}")
        if self.normalized and self.data.shape[0] > 0:
            norms = np.linalg.norm(self.data.astype(np.float64), axis=1)
            worst = float(np.max(np.abs(norms - 1.0)))
            if worst > _NORM_TOL:
                raise ValueError(f"normalized table has row norm off by {worst:.2e}")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """Scale each row to unit L2 norm; zero rows are an error."""
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if not np.all(norms > 0.0):
        raise ValueError("cannot normalize a zero-norm row")
    return matrix / norms


def mean_pool_normalize(rows: np.ndarray) -> np.ndarray:
    """Average row vectors and re-normalize; the per-class prompt aggregation rule."""
    mean = np.asarray(rows, dtype=np.float64).mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm == 0.0:
        raise ValueError("mean-pooled vector has zero norm")
    return mean / norm


@dataclass(frozen=True)
class PromptTemplateSet:
    """Fixed prompt templates, each containing the [CLASS] placeholder exactly once."""

    templates: tuple[str, ...] = ("a photo of a [CLASS]",)

    def __post_init__(self):
        object.__setattr__(self, "templates", tuple(self.templates))
        for t in self.templates:
            if t.count("[CLASS]") != 1:
                raise ValueError(
                    f"template {t!r} must contain the [CLASS] placeholder exactly once")


def expand_prompts(templates: PromptTemplateSet, vocab) -> list[tuple[int, str]]:
    """Literal substitution of every class name into every template."""
    return [
        (class_id, template.replace("[CLASS]", name))
        for class_id, name in enumerate(vocab.names)
        for template in templates.templates
    ]


def _require_seed(seed: int) -> int:
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    return seed


def class_anchor(class_id: int, dim: int, seed: int) -> np.ndarray:
    """Unit anchor vector for a class, a pure function of (class_id, dim, seed)."""
    rng = np.random.default_rng([_require_seed(seed), _CLASS_STREAM, class_id, dim])
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def region_feature(class_id: int, dim: int, seed: int, noise_scale: float,
                   sample_index: int) -> np.ndarray:
    """Unit feature for one region: its class anchor plus seeded per-sample noise."""
    anchor = class_anchor(class_id, dim, seed)
    if noise_scale == 0.0:
        return anchor
    rng = np.random.default_rng([_require_seed(seed), _REGION_STREAM, sample_index, dim])
    noisy = anchor + noise_scale * rng.standard_normal(dim)
    return noisy / np.linalg.norm(noisy)


def _alignment_map(dim: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Fixed per-coordinate affine map between the visual and text spaces.

    Returns (log-gains, shift direction).  The map is class-independent, so a
    head that learns it from base-class pairs applies equally to novel
    classes; being coordinate-wise, it is exactly the kind of mismatch an
    affine normalization layer can absorb.
    """
    rng = np.random.default_rng([_require_seed(seed), _ROTATION_STREAM, dim])
    log_gains = rng.standard_normal(dim)
    shift = rng.standard_normal(dim)
    return log_gains, shift / np.linalg.norm(shift)


def synthetic_region_embeddings(ds, dim: int, seed: int,
                                noise_scale: float = 0.05) -> EmbeddingTable:
    """Deterministic stand-in for frozen backbone features of dataset regions."""
    if dim < 2:
        raise ValueError("dim must be >= 2")
    rows = np.empty((len(ds.samples), dim), dtype=np.float64)
    for i, sample in enumerate(ds.samples):
        rows[i] = region_feature(sample.pseudo_label, dim, seed, noise_scale, i)
    return EmbeddingTable(rows.astype(np.float32), ds.sample_keys(), normalized=True)


def synthetic_class_embeddings(vocab, dim: int, seed: int,
                               alignment_gap: float = 0.5) -> EmbeddingTable:
    """Deterministic stand-in for text-encoder class embeddings.

    Each class anchor passes through a fixed seeded coordinate-wise affine
    map (gains and a shift) whose strength is alignment_gap: 0 reproduces the
    visual anchors exactly, 1 applies the full distortion.  The map is shared
    by all classes, so adapting to it on one subset of classes carries over
    to the rest.
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    if not (0.0 <= alignment_gap <= 1.0):
        raise ValueError("alignment_gap must be in [0, 1]")
    log_gains, shift = _alignment_map(dim, seed)
    gains = np.exp(alignment_gap * log_gains)
    rows = np.empty((len(vocab), dim), dtype=np.float64)
    for c in range(len(vocab)):
        anchor = class_anchor(c, dim, seed)
        mapped = gains * anchor + alignment_gap * shift
        rows[c] = mapped / np.linalg.norm(mapped)
    return EmbeddingTable(rows.astype(np.float32), list(vocab.names), normalized=True)


def synthetic_embeddings(source, dim: int, seed: int, noise_scale: float = 0.05,
                         alignment_gap: float = 0.5) -> EmbeddingTable:
    """Dispatch on source: a RegionDataset gets region features, a vocabulary text features."""
    if hasattr(source, "samples"):
        return synthetic_region_embeddings(source, dim, seed, noise_scale)
    return synthetic_class_embeddings(source, dim, seed, alignment_gap)


def synthetic_proposal_embeddings(records, gts, dim: int, seed: int,
                                  noise_scale: float = 0.05,
                                  match_iou: float = 0.5) -> EmbeddingTable:
    """Features for arbitrary proposal boxes, supervised by ground truth.

    Each proposal takes the feature of the ground-truth class whose box on the
    same image overlaps it most (IoU >= match_iou); unmatched proposals get a
    pure noise direction, which scores near zero against every class anchor.
    Row k aligns with records[k]; item ids follow detection_keys.
    """
    from .records import detection_keys, iou as box_iou

    if dim < 2:
        raise ValueError("dim must be >= 2")
    if not (0.0 < match_iou <= 1.0):
        raise ValueError(f"match_iou must be in (0, 1], got {match_iou}")
    records = list(records)
    by_image: dict[str, list] = {}
    for g in gts:
        by_image.setdefault(g.image_id, []).append(g)

    rows = np.empty((len(records), dim), dtype=np.float64)
    for i, rec in enumerate(records):
        best_class, best_overlap = None, 0.0
        for g in by_image.get(rec.image_id, ()):
            overlap = box_iou(rec.box, g.box)
            if overlap > best_overlap:
                best_class, best_overlap = g.class_id, overlap
        rng = np.random.default_rng([_require_seed(seed), _PROPOSAL_STREAM, i, dim])
        if best_class is not None and best_overlap >= match_iou:
            noisy = class_anchor(best_class, dim, seed) + noise_scale * rng.standard_normal(dim)
        else:
            noisy = rng.standard_normal(dim)
        rows[i] = noisy / np.linalg.norm(noisy)
    return EmbeddingTable(rows.astype(np.float32), detection_keys(records), normalized=True)


def write_table_stream(table: EmbeddingTable, stream) -> None:
    stream.write(MAGIC)
    stream.write(struct.pack("<III", FORMAT_VERSION, table.rows, table.dim))
    stream.write(struct.pack("<B", 1 if table.normalized else 0))
    stream.write(np.ascontiguousarray(table.data, dtype="<f4").tobytes())
    ids_blob = json.dumps(table.item_ids, separators=(",", ":")).encode("utf-8")
    stream.write(struct.pack("<I", len(ids_blob)))
    stream.write(ids_blob)


def read_table_stream(stream) -> EmbeddingTable:
    def take(count: int, what: str) -> bytes:
        blob = stream.read(count)
        if len(blob) != count:
            raise EmbeddingFormatError(f"truncated payload while reading {what}")
        return blob

    magic = take(4, "magic")
    if magic != MAGIC:
        raise EmbeddingFormatError(f"bad magic {magic!r}")
    version, n, d = struct.unpack("<III", take(12, "header"))
    if version != FORMAT_VERSION:
        raise EmbeddingFormatError(f"unsupported version {version}")
    flag = struct.unpack("<B", take(1, "normalized flag"))[0]
    if flag not in (0, 1):
        raise EmbeddingFormatError(f"invalid normalized flag {flag}")
    data = np.frombuffer(take(4 * n * d, "matrix data"), dtype="<f4").reshape(n, d)
    ids_len = struct.unpack("<I", take(4, "item id length"))[0]
    item_ids = json.loads(take(ids_len, "item ids").decode("utf-8"))
    if len(item_ids) != n:
        raise EmbeddingFormatError(
            f"item id count mismatch: header says {n} rows, got {len(item_ids)} ids")
    return EmbeddingTable(data.copy(), item_ids, normalized=bool(flag))


def write_embeddings(table: EmbeddingTable, path) -> None:
    with open(path, "wb") as f:
        write_table_stream(table, f)


def read_embeddings(path) -> EmbeddingTable:
    with open(path, "rb") as f:
        table = read_table_stream(f)
        trailing = f.read(1)
    if trailing:
        raise EmbeddingFormatError("trailing bytes after payload")
    return table
