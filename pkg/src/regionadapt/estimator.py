"""Scikit-learn estimator facade over the trainable head.

X is a matrix of frozen backbone features, y the class ids used as
pseudo-labels. fit runs the sigmoid-loss loop, optionally followed by
interpolation back toward the initial weights; predict scores features
against the frozen class embeddings handed to the constructor.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .head import HeadParameters, head_forward, pair_logits
from .merging import MergeConfig, interpolate
from .training import TrainConfig, fit_head


class AdaptiveHeadClassifier(BaseEstimator, ClassifierMixin):
    """Fine-tunes a normalization + projection head on frozen features.

    Parameters
    ----------
    text_embeddings : array of shape (n_classes, d_out)
        Frozen unit-norm class embeddings the head aligns features to.
    classes : array of shape (n_classes,), optional
        Class ids for the text rows; defaults to 0..n_classes-1.
    merge_alpha : float, optional
        When set, the fitted weights are linearly interpolated back toward
        the initial weights with this weight on the initial side.
    init_theta : HeadParameters, optional
        Starting head; defaults to the identity-style initialization.
    """

    def __init__(self, text_embeddings=None, classes=None, batch_size=64,
                 lr0=1e-5, epochs=5, ln_epsilon=1e-6, seed=0,
                 full_vocab_negatives=False, merge_alpha=None, init_theta=None):
        self.text_embeddings = text_embeddings
        self.classes = classes
        self.batch_size = batch_size
        self.lr0 = lr0
        self.epochs = epochs
        self.ln_epsilon = ln_epsilon
        self.seed = seed
        self.full_vocab_negatives = full_vocab_negatives
        self.merge_alpha = merge_alpha
        self.init_theta = init_theta

    def _text_matrix(self):
        if self.text_embeddings is None:
            raise ValueError("text_embeddings is required")
        text = check_array(np.asarray(self.text_embeddings, dtype=np.float64))
        classes = (np.arange(text.shape[0]) if self.classes is None
                   else np.asarray(self.classes, dtype=np.int64))
        if classes.shape[0] != text.shape[0]:
            raise ValueError("classes must align with text embedding rows")
        return text, classes

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if y.shape[0] != X.shape[0]:
            raise ValueError("X and y length mismatch")
        text, classes = self._text_matrix()
        unknown = set(np.unique(y)) - set(int(c) for c in classes)
        if unknown:
            raise ValueError(f"labels {sorted(unknown)} have no text embedding row")

        theta_init = (self.init_theta.copy() if self.init_theta is not None
                      else HeadParameters.identity_init(X.shape[1], text.shape[1]))
        cfg = TrainConfig(
            batch_size=self.batch_size,
            lr0=self.lr0,
            epochs=self.epochs,
            ln_epsilon=self.ln_epsilon,
            seed=self.seed,
            full_vocab_negatives=self.full_vocab_negatives,
        )
        theta, history = fit_head(X, y, text, classes, theta_init, cfg)
        if self.merge_alpha is not None:
            theta = interpolate(theta_init, theta, MergeConfig(self.merge_alpha))

        self.theta_ = theta
        self.history_ = history
        self.classes_ = classes
        self.text_matrix_ = text
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        """Unit-norm head embeddings for feature rows."""
        check_is_fitted(self, "theta_")
        X = check_array(X, dtype=np.float64)
        return head_forward(X, self.theta_, self.ln_epsilon)

    def decision_function(self, X):
        """Similarity logits against every class embedding."""
        return pair_logits(self.transform(X), self.text_matrix_,
                           self.theta_.log_t, self.theta_.b)

    def predict(self, X):
        z = self.decision_function(X)
        return self.classes_[np.argmax(z, axis=1)]
