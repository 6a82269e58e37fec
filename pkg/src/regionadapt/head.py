"""The trainable slice over frozen features and its loss.

Forward path, per region feature f (length d_in):

    h = gamma * (f - mean(f)) / sqrt(var(f) + eps) + beta
    v = (h @ W) / ||h @ W||
    z[j] = exp(log_t) * <v, u_j> + b          for each class embedding u_j

and the per-pair sigmoid cross-entropy averaged over the full region-by-class
grid. Gradients are closed-form, including the Jacobians of the row
normalization and of the affine normalization layer, and are checked against
central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

DEFAULT_LN_EPS = 1e-6

# Sigmoid-loss scalar initialization: temperature 10, bias -10.
INIT_LOG_T = float(np.log(10.0))
INIT_B = -10.0


@dataclass
class HeadParameters:
    """The trainable tensors: affine normalization, projection, loss scalars."""

    gamma: np.ndarray
    beta: np.ndarray
    W: np.ndarray
    log_t: float
    b: float

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        self.W = np.asarray(self.W, dtype=np.float64)
        self.log_t = float(self.log_t)
        self.b = float(self.b)
        if self.gamma.ndim != 1 or self.beta.shape != self.gamma.shape:
            raise ValueError("gamma and beta must be 1-D with identical shape")
        if self.gamma.size < 2:
            raise ValueError("input width must be >= 2")
        if self.W.ndim != 2 or self.W.shape[0] != self.gamma.size:
            raise ValueError(f"projection shape {self.W.shape} does not match "
                             f"input width {self.gamma.size}")
        for name, value in self.tensors().items():
            if not np.all(np.isfinite(value)):
                raise ValueError(f"non-finite values in parameter {name}")

    @property
    def d_in(self) -> int:
        return self.gamma.size

    @property
    def d_out(self) -> int:
        return self.W.shape[1]

    def tensors(self) -> dict[str, np.ndarray]:
        """Named views of every trainable tensor (scalars as 0-d arrays)."""
        return {
            "gamma": self.gamma,
            "beta": self.beta,
            "W": self.W,
            "log_t": np.asarray(self.log_t),
            "b": np.asarray(self.b),
        }

    def parameter_count(self, include_scalars: bool = True) -> int:
        count = 2 * self.d_in + self.d_in * self.d_out
        return count + 2 if include_scalars else count

    def copy(self) -> "HeadParameters":
        return HeadParameters(self.gamma.copy(), self.beta.copy(), self.W.copy(),
                              self.log_t, self.b)

    def allclose(self, other: "HeadParameters", rtol=0.0, atol=0.0) -> bool:
        return (np.allclose(self.gamma, other.gamma, rtol=rtol, atol=atol)
                and np.allclose(self.beta, other.beta, rtol=rtol, atol=atol)
                and np.allclose(self.W, other.W, rtol=rtol, atol=atol)
                and np.isclose(self.log_t, other.log_t, rtol=rtol, atol=atol)
                and np.isclose(self.b, other.b, rtol=rtol, atol=atol))

    @classmethod
    def identity_init(cls, d_in: int, d_out: int) -> "HeadParameters":
        """Pre-trained stand-in: unit gain, zero bias, truncated-identity projection."""
        W = np.eye(d_in, d_out)
        return cls(np.ones(d_in), np.zeros(d_in), W, INIT_LOG_T, INIT_B)


@dataclass
class HeadGradients:
    """Loss gradients, one entry per trainable tensor."""

    gamma: np.ndarray
    beta: np.ndarray
    W: np.ndarray
    log_t: float
    b: float

    def tensors(self) -> dict[str, np.ndarray]:
        return {
            "gamma": self.gamma,
            "beta": self.beta,
            "W": self.W,
            "log_t": np.asarray(self.log_t),
            "b": np.asarray(self.b),
        }


@dataclass
class PairBatch:
    """A region-by-class grid: features, labels, class embeddings, binary targets."""

    region_features: np.ndarray   # B x d_in
    region_labels: np.ndarray     # B
    class_ids: np.ndarray         # C, vocabulary ids of the text rows
    text_embeddings: np.ndarray   # C x d_out, unit rows
    y: np.ndarray                 # B x C binary

    def __post_init__(self):
        self.region_features = np.asarray(self.region_features, dtype=np.float64)
        self.region_labels = np.asarray(self.region_labels, dtype=np.int64)
        self.class_ids = np.asarray(self.class_ids, dtype=np.int64)
        self.text_embeddings = np.asarray(self.text_embeddings, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        b, c = self.region_features.shape[0], self.class_ids.size
        if self.y.shape != (b, c):
            raise ValueError(f"label grid shape {self.y.shape} != ({b}, {c})")
        if self.text_embeddings.shape[0] != c:
            raise ValueError("one text row per class id required")


def make_pair_batch(features, labels, text_matrix, text_class_ids,
                    full_vocab: bool = False) -> PairBatch:
    """Pair a feature batch with class embeddings and build the binary target grid.

    By default the class set is the distinct labels present in the batch;
    full_vocab pairs against every class in the text table instead.
    """
    labels = np.asarray(labels, dtype=np.int64)
    text_class_ids = np.asarray(text_class_ids, dtype=np.int64)
    if full_vocab:
        keep = np.arange(text_class_ids.size)
    else:
        present = np.unique(labels)
        id_to_row = {int(c): i for i, c in enumerate(text_class_ids)}
        missing = [int(c) for c in present if int(c) not in id_to_row]
        if missing:
            raise ValueError(f"text embeddings missing classes {missing}")
        keep = np.array([id_to_row[int(c)] for c in present], dtype=np.int64)
    class_ids = text_class_ids[keep]
    y = (labels[:, None] == class_ids[None, :]).astype(np.float64)
    return PairBatch(
        region_features=features,
        region_labels=labels,
        class_ids=class_ids,
        text_embeddings=np.asarray(text_matrix, dtype=np.float64)[keep],
        y=y,
    )


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
               eps: float = DEFAULT_LN_EPS) -> np.ndarray:
    """Normalize over the feature dimension (population variance), then affine."""
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return gamma * (x - mean) / np.sqrt(var + eps) + beta


def head_forward(features: np.ndarray, theta: HeadParameters,
                 eps: float = DEFAULT_LN_EPS) -> np.ndarray:
    """Project normalized features and scale every output row to unit norm."""
    h = layer_norm(np.atleast_2d(features), theta.gamma, theta.beta, eps)
    projected = h @ theta.W
    norms = np.linalg.norm(projected, axis=1, keepdims=True)
    if not np.all(norms > 0.0):
        raise ValueError("projected row with zero norm: degenerate head configuration")
    return projected / norms


def pair_logits(v: np.ndarray, u: np.ndarray, log_t: float, b: float) -> np.ndarray:
    """Similarity logits: temperature-scaled cosines plus the shared bias."""
    return np.exp(log_t) * (np.atleast_2d(v) @ np.atleast_2d(u).T) + b


def sigmoid_contrastive_loss(z: np.ndarray, y: np.ndarray) -> float:
    """Mean per-pair binary cross-entropy on logits, in log-sum-exp form.

    Stable for arbitrarily large |z|: -log(sigmoid(z)) = logaddexp(0, -z).
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if z.shape != y.shape:
        raise ValueError(f"logit grid {z.shape} != label grid {y.shape}")
    per_pair = y * np.logaddexp(0.0, -z) + (1.0 - y) * np.logaddexp(0.0, z)
    return float(per_pair.mean())


def _forward_pieces(batch: PairBatch, theta: HeadParameters, eps: float):
    """Forward pass keeping every intermediate needed by the backward pass."""
    x = batch.region_features
    mean = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    x_hat = (x - mean) / np.sqrt(var + eps)
    h = theta.gamma * x_hat + theta.beta
    projected = h @ theta.W
    norms = np.linalg.norm(projected, axis=1, keepdims=True)
    if not np.all(norms > 0.0):
        raise ValueError("projected row with zero norm: degenerate head configuration")
    v = projected / norms
    z = np.exp(theta.log_t) * (v @ batch.text_embeddings.T) + theta.b
    return x_hat, h, norms, v, z


def head_loss(batch: PairBatch, theta: HeadParameters,
              eps: float = DEFAULT_LN_EPS) -> float:
    _, _, _, _, z = _forward_pieces(batch, theta, eps)
    return sigmoid_contrastive_loss(z, batch.y)


def loss_gradients(batch: PairBatch, theta: HeadParameters,
                   eps: float = DEFAULT_LN_EPS) -> tuple[float, HeadGradients]:
    """Loss value and its analytic gradients for every trainable tensor."""
    x_hat, h, norms, v, z = _forward_pieces(batch, theta, eps)
    u = batch.text_embeddings
    t = np.exp(theta.log_t)
    n_pairs = z.size

    # d loss / d z, elementwise.
    g = (expit(z) - batch.y) / n_pairs

    d_b = float(g.sum())
    # z = t * cos + b, and t * cos = z - b, so the log_t gradient reuses z.
    d_log_t = float((g * (z - theta.b)).sum())

    # Back through the cosine grid to the unit rows.
    d_v = t * (g @ u)
    # Back through the row normalization v = p / ||p||.
    d_p = (d_v - (d_v * v).sum(axis=1, keepdims=True) * v) / norms
    d_W = h.T @ d_p
    d_h = d_p @ theta.W.T

    d_gamma = (d_h * x_hat).sum(axis=0)
    d_beta = d_h.sum(axis=0)

    loss = sigmoid_contrastive_loss(z, batch.y)
    return loss, HeadGradients(d_gamma, d_beta, d_W, d_log_t, d_b)
