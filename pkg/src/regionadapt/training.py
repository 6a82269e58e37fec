"""Deterministic fine-tuning of the head: schedule, optimizer, loop, checkpoints."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingTable, read_table_stream, write_table_stream
from .head import (
    DEFAULT_LN_EPS,
    HeadGradients,
    HeadParameters,
    loss_gradients,
    make_pair_batch,
)

CHECKPOINT_FORMAT = "regionadapt-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Loop hyperparameters; defaults follow the reference recipe."""

    batch_size: int = 64
    lr0: float = 1e-5
    epochs: int = 5
    ln_epsilon: float = DEFAULT_LN_EPS
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    full_vocab_negatives: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr0 <= 0.0:
            raise ValueError(f"lr0 must be positive, got {self.lr0}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "lr0": self.lr0,
            "epochs": self.epochs,
            "ln_epsilon": self.ln_epsilon,
            "seed": self.seed,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "adam_eps": self.adam_eps,
            "full_vocab_negatives": self.full_vocab_negatives,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    """Half-cosine decay from lr0 at step 0 to 0 at total_steps."""
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    if not (0 <= step <= total_steps):
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


@dataclass
class AdamState:
    """First/second moment accumulators and step count, one slot per tensor."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, theta: HeadParameters) -> "AdamState":
        return cls(
            m={k: np.zeros_like(t, dtype=np.float64) for k, t in theta.tensors().items()},
            v={k: np.zeros_like(t, dtype=np.float64) for k, t in theta.tensors().items()},
        )


def optimizer_step(theta: HeadParameters, grads: HeadGradients, state: AdamState,
                   lr: float, beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8) -> tuple[HeadParameters, AdamState]:
    """One bias-corrected adaptive-moment update; inputs are left untouched."""
    grad_tensors = grads.tensors()
    for name, g in grad_tensors.items():
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient for tensor {name!r}")

    step = state.step + 1
    bc1 = 1.0 - beta1 ** step
    bc2 = 1.0 - beta2 ** step
    new_m, new_v, updated = {}, {}, {}
    for name, value in theta.tensors().items():
        g = np.asarray(grad_tensors[name], dtype=np.float64)
        m = beta1 * state.m[name] + (1.0 - beta1) * g
        v = beta2 * state.v[name] + (1.0 - beta2) * g * g
        new_m[name], new_v[name] = m, v
        updated[name] = value - lr * (m / bc1) / (np.sqrt(v / bc2) + eps)

    new_theta = HeadParameters(
        gamma=updated["gamma"],
        beta=updated["beta"],
        W=updated["W"],
        log_t=float(updated["log_t"]),
        b=float(updated["b"]),
    )
    return new_theta, AdamState(m=new_m, v=new_v, step=step)


@dataclass(frozen=True)
class TrainStep:
    step: int
    lr: float
    loss: float


def fit_head(features, labels, text_matrix, text_class_ids,
             theta_init: HeadParameters,
             cfg: TrainConfig) -> tuple[HeadParameters, list[TrainStep]]:
    """Run the seeded fine-tuning loop over frozen features.

    Per step: shuffle-derived batch, region-by-class pair grid, loss and
    gradients, cosine learning rate, one optimizer update. Fully deterministic
    for a fixed config.
    """
    features = np.array(features, dtype=np.float64, copy=True)
    labels = np.asarray(labels, dtype=np.int64)
    text_matrix = np.array(text_matrix, dtype=np.float64, copy=True)
    n = features.shape[0]
    if labels.shape != (n,):
        raise ValueError(f"{n} feature rows but {labels.shape} labels")

    theta = theta_init.copy()
    if n == 0:
        return theta, []

    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    state = AdamState.zeros_like(theta)
    rng = np.random.default_rng(cfg.seed)
    history: list[TrainStep] = []

    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = make_pair_batch(features[idx], labels[idx], text_matrix,
                                    text_class_ids, full_vocab=cfg.full_vocab_negatives)
            loss, grads = loss_gradients(batch, theta, cfg.ln_epsilon)
            lr = cosine_lr(step, total_steps, cfg.lr0)
            theta, state = optimizer_step(theta, grads, state, lr,
                                          cfg.beta1, cfg.beta2, cfg.adam_eps)
            history.append(TrainStep(step=step, lr=lr, loss=loss))
            step += 1
    return theta, history


def train(ds, region_emb: EmbeddingTable, text_emb: EmbeddingTable,
          theta_init: HeadParameters,
          cfg: TrainConfig) -> tuple[HeadParameters, list[TrainStep]]:
    """Dataset-level entry: validates alignment, then runs fit_head.

    region_emb rows must align one-to-one with ds.samples (checked against the
    dataset's sample keys); text_emb rows are class names and must cover every
    pseudo-label present.
    """
    if region_emb.rows != len(ds.samples):
        raise ValueError(f"{region_emb.rows} feature rows for {len(ds.samples)} samples")
    expected_keys = ds.sample_keys()
    if region_emb.item_ids != expected_keys:
        raise ValueError("region embedding row ids do not match dataset sample keys")

    vocab = ds.vocabulary
    text_class_ids = [vocab.id_of(name) for name in text_emb.item_ids]
    covered = set(text_class_ids)
    needed = {s.pseudo_label for s in ds.samples}
    if not needed <= covered:
        missing = sorted(vocab.name_of(c) for c in needed - covered)
        raise ValueError(f"text embeddings missing classes {missing}")

    labels = np.array([s.pseudo_label for s in ds.samples], dtype=np.int64)
    return fit_head(region_emb.data, labels, text_emb.data, text_class_ids,
                    theta_init, cfg)


def write_history_csv(history, path) -> None:
    lines = ["step,lr,loss"]
    lines += [f"{h.step},{h.lr!r},{h.loss!r}" for h in history]
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


_TENSOR_ORDER = ("gamma", "beta", "W", "log_t", "b")


def save_checkpoint(theta: HeadParameters, path, header: dict | None = None) -> None:
    """JSON header plus one interchange-format block per tensor.

    Tensor payloads are 32-bit reals, matching the interchange convention.
    """
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "d_in": theta.d_in,
        "d_out": theta.d_out,
    }
    meta.update(header or {})
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name in _TENSOR_ORDER:
            # Each tensor flattens to a single row; the header dims restore shape.
            value = np.asarray(theta.tensors()[name], dtype=np.float32).reshape(1, -1)
            write_table_stream(EmbeddingTable(value, [name]), f)


def load_checkpoint(path) -> tuple[HeadParameters, dict]:
    with open(path, "rb") as f:
        raw_len = f.read(4)
        if len(raw_len) != 4:
            raise ValueError(f"not a checkpoint file: {path}")
        header_len = struct.unpack("<I", raw_len)[0]
        blob = f.read(header_len)
        if len(blob) != header_len:
            raise ValueError(f"truncated checkpoint header in {path}")
        meta = json.loads(blob.decode("utf-8"))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unrecognized checkpoint format in {path}")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        blocks = {}
        for name in _TENSOR_ORDER:
            table = read_table_stream(f)
            if table.item_ids != [name]:
                raise ValueError(f"checkpoint block order mismatch: expected {name!r}, "
                                 f"got {table.item_ids}")
            blocks[name] = table.data.astype(np.float64)[0]
    d_in, d_out = int(meta["d_in"]), int(meta["d_out"])
    theta = HeadParameters(
        gamma=blocks["gamma"],
        beta=blocks["beta"],
        W=blocks["W"].reshape(d_in, d_out),
        log_t=float(blocks["log_t"][0]),
        b=float(blocks["b"][0]),
    )
    return theta, meta
