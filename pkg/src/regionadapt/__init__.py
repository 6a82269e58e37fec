"""Region-level head adaptation for cooperative open-vocabulary detection.

Builds pseudo-labeled region datasets from closed-set detector outputs,
fine-tunes a small head (normalization + projection + loss scalars) over
frozen features with the sigmoid contrastive loss, interpolates weights,
classifies background proposals, fuses detection streams, and scores the
result with a from-scratch AP engine.
"""

from .dataset import (
    BuilderConfig,
    RegionDataset,
    RegionSample,
    build_dataset,
    dataset_stats,
    read_manifest,
    write_manifest,
)
from .embeddings import (
    EmbeddingFormatError,
    EmbeddingTable,
    PromptTemplateSet,
    expand_prompts,
    read_embeddings,
    synthetic_class_embeddings,
    synthetic_embeddings,
    synthetic_proposal_embeddings,
    synthetic_region_embeddings,
    write_embeddings,
)
from .estimator import AdaptiveHeadClassifier
from .evaluation import EvalReport, GroundTruthRecord, average_precision, evaluate, match_detections
from .head import (
    HeadParameters,
    PairBatch,
    head_forward,
    layer_norm,
    loss_gradients,
    make_pair_batch,
    pair_logits,
    sigmoid_contrastive_loss,
)
from .inference import FusionConfig, classify_regions, fuse, nms
from .merging import MergeConfig, interpolate
from .records import (
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
from .training import (
    AdamState,
    TrainConfig,
    cosine_lr,
    fit_head,
    load_checkpoint,
    optimizer_step,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AdaptiveHeadClassifier",
    "BACKGROUND",
    "BoundingBox",
    "BuilderConfig",
    "ClassVocabulary",
    "DetectionRecord",
    "EmbeddingFormatError",
    "EmbeddingTable",
    "EvalReport",
    "FusionConfig",
    "GroundTruthRecord",
    "HeadParameters",
    "ImageMeta",
    "MergeConfig",
    "PairBatch",
    "PromptTemplateSet",
    "RegionDataset",
    "RegionSample",
    "TrainConfig",
    "average_precision",
    "build_dataset",
    "clamp_box",
    "classify_regions",
    "cosine_lr",
    "dataset_stats",
    "detection_keys",
    "evaluate",
    "expand_prompts",
    "fit_head",
    "fuse",
    "head_forward",
    "interpolate",
    "iou",
    "layer_norm",
    "load_checkpoint",
    "loss_gradients",
    "make_pair_batch",
    "match_detections",
    "nms",
    "optimizer_step",
    "pair_logits",
    "read_detections",
    "read_embeddings",
    "read_image_metas",
    "read_manifest",
    "save_checkpoint",
    "sigmoid_contrastive_loss",
    "synthetic_class_embeddings",
    "synthetic_embeddings",
    "synthetic_proposal_embeddings",
    "synthetic_region_embeddings",
    "train",
    "write_detections",
    "write_embeddings",
    "write_image_metas",
    "write_manifest",
]
