"""Scikit-learn compatible estimators around the adversarial transfer model."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .distance import pairwise_euclidean
from .domain import Domain
from .model import SaganConfig, SaganModel, generate
from .tensor import softmax
from .trainer import fit as fit_sagan
from .trainer import fit_classifier

# generated features live inside tanh's near-linear zone
SCALE_TARGET = 0.5


def fit_feature_scale(*arrays) -> float:
    """Multiplier mapping the largest absolute feature value onto SCALE_TARGET."""
    peak = max(float(np.abs(a).max()) for a in arrays if len(a))
    return SCALE_TARGET / peak if peak > 0 else 1.0


def _encode_labels(y, n_classes):
    classes = np.unique(y)
    if n_classes is not None:
        if classes.min() < 0 or classes.max() >= n_classes:
            raise ValueError(f"labels must lie in 0..{n_classes - 1} when n_classes is given")
        return np.arange(n_classes), np.asarray(y, dtype=np.int64)
    return classes, np.searchsorted(classes, y)


class _ConfigMixin:
    _config_params = ("lambda_adv", "lambda_cls", "batch_size", "noise_sigma", "epochs", "d_f", "c_f",
                      "g_f", "n_blocks", "d_lr", "c_lr", "g_lr", "d_optimizer", "c_optimizer",
                      "g_optimizer", "score_n_sub", "score_repeats")

    def _config(self) -> SaganConfig:
        kw = {p: getattr(self, p) for p in self._config_params if hasattr(self, p)}
        return SaganConfig(seed=int(self.random_state or 0), **kw)


class SaganClassifier(_ConfigMixin, ClassifierMixin, BaseEstimator):
    """Adversarial cross-subject transfer classifier.

    ``fit(X, y, X_target)`` trains the generator/discriminator/classifier
    triad on labeled source rows and unlabeled target rows; ``predict``
    uses the trained classifier, and ``transform`` maps source rows into
    the target distribution with the generator.
    """

    def __init__(self, lambda_adv=1.0, lambda_cls=10.0, batch_size=64, noise_sigma=0.1, epochs=200,
                 d_f=3, c_f=32, g_f=32, n_blocks=2, d_lr=1e-2, c_lr=1e-3, g_lr=1e-3,
                 d_optimizer="sgd-momentum", c_optimizer="adaptive-moments",
                 g_optimizer="adaptive-moments", score_n_sub=128, score_repeats=2,
                 feature_scale="auto", n_classes=None, random_state=0):
        self.lambda_adv = lambda_adv
        self.lambda_cls = lambda_cls
        self.batch_size = batch_size
        self.noise_sigma = noise_sigma
        self.epochs = epochs
        self.d_f = d_f
        self.c_f = c_f
        self.g_f = g_f
        self.n_blocks = n_blocks
        self.d_lr = d_lr
        self.c_lr = c_lr
        self.g_lr = g_lr
        self.d_optimizer = d_optimizer
        self.c_optimizer = c_optimizer
        self.g_optimizer = g_optimizer
        self.score_n_sub = score_n_sub
        self.score_repeats = score_repeats
        self.feature_scale = feature_scale
        self.n_classes = n_classes
        self.random_state = random_state

    def fit(self, X, y, X_target):
        X, y = check_X_y(X, y, dtype=np.float64)
        X_target = check_array(X_target, dtype=np.float64)
        if X_target.shape[1] != X.shape[1]:
            raise ValueError(f"target has {X_target.shape[1]} features, source has {X.shape[1]}")
        self.classes_, codes = _encode_labels(y, self.n_classes)
        self.n_features_in_ = X.shape[1]
        self.scale_ = fit_feature_scale(X, X_target) if self.feature_scale == "auto" else float(self.feature_scale)
        config = self._config()
        self.model_ = SaganModel(X.shape[1], len(self.classes_), config)
        source = Domain(X * self.scale_, codes, "source", "source")
        target = Domain(X_target * self.scale_, None, "target", "target")
        self.classifier_, self.train_state_ = fit_sagan(source, target, config, model=self.model_)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "classifier_")
        X = check_array(X, dtype=np.float64)
        return self.classifier_.predict(X * self.scale_)

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[scores.argmax(axis=1)]

    def transform(self, X):
        """Generated (target-like) counterparts of source rows, noise-free, in input units."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return generate(self.model_.G, X * self.scale_) / self.scale_


class ConvNetClassifier(_ConfigMixin, ClassifierMixin, BaseEstimator):
    """The same classifier network trained on labeled rows only (no adaptation)."""

    def __init__(self, batch_size=64, epochs=200, c_f=32, n_blocks=2, c_lr=1e-3,
                 c_optimizer="adaptive-moments", feature_scale="auto", n_classes=None, random_state=0):
        self.batch_size = batch_size
        self.epochs = epochs
        self.c_f = c_f
        self.n_blocks = n_blocks
        self.c_lr = c_lr
        self.c_optimizer = c_optimizer
        self.feature_scale = feature_scale
        self.n_classes = n_classes
        self.random_state = random_state

    def fit(self, X, y, X_reference=None):
        """``X_reference`` (optional) joins the scale fit so scales match a transfer run."""
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, codes = _encode_labels(y, self.n_classes)
        self.n_features_in_ = X.shape[1]
        if self.feature_scale == "auto":
            ref = [X] if X_reference is None else [X, check_array(X_reference, dtype=np.float64)]
            self.scale_ = fit_feature_scale(*ref)
        else:
            self.scale_ = float(self.feature_scale)
        self.classifier_ = fit_classifier(X * self.scale_, codes, len(self.classes_), self._config())
        return self

    def decision_function(self, X):
        check_is_fitted(self, "classifier_")
        return self.classifier_.predict(check_array(X, dtype=np.float64) * self.scale_)

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[scores.argmax(axis=1)]


class KNNPCAClassifier(ClassifierMixin, BaseEstimator):
    """k-nearest-neighbour vote in a PCA space fitted on source and unlabeled target rows.

    Ties in the vote go to the class with the smallest summed neighbour
    distance, then to the lowest class.
    """

    def __init__(self, n_neighbors=5, n_components=None):
        self.n_neighbors = n_neighbors
        self.n_components = n_components

    def fit(self, X, y, X_target=None):
        from .decomposition import fit_pca, project

        X, y = check_X_y(X, y, dtype=np.float64)
        if self.n_neighbors < 1 or self.n_neighbors > len(X):
            raise ValueError(f"n_neighbors={self.n_neighbors} must lie in 1..{len(X)}")
        pooled = X if X_target is None else np.vstack([X, check_array(X_target, dtype=np.float64)])
        k = self.n_components or min(X.shape[1], len(pooled) - 1)
        self.space_ = fit_pca(pooled, k)
        self._project = project
        self.classes_, self._codes = np.unique(y, return_inverse=True)
        self.train_ = project(self.space_, X)
        self.n_features_in_ = X.shape[1]
        return self

    def kneighbors(self, X):
        check_is_fitted(self, "train_")
        q = self._project(self.space_, check_array(X, dtype=np.float64))
        d = pairwise_euclidean(q, self.train_)
        idx = np.argsort(d, axis=1, kind="stable")[:, :self.n_neighbors]
        return np.take_along_axis(d, idx, axis=1), idx

    def predict(self, X):
        dist, idx = self.kneighbors(X)
        n_cls = len(self.classes_)
        labels = self._codes[idx]
        votes = np.zeros((len(idx), n_cls))
        dsum = np.zeros((len(idx), n_cls))
        rows = np.repeat(np.arange(len(idx)), idx.shape[1])
        np.add.at(votes, (rows, labels.ravel()), 1.0)
        np.add.at(dsum, (rows, labels.ravel()), dist.ravel())
        top = votes == votes.max(axis=1, keepdims=True)
        dsum = np.where(top, dsum, np.inf)
        return self.classes_[dsum.argmin(axis=1)]
