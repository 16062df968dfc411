"""Principal component basis shared by every domain."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import container


@dataclass
class FeatureSpace:
    mean: np.ndarray  # [d_raw]
    components: np.ndarray  # [k, d_raw], orthonormal rows
    explained_variance: np.ndarray  # [k], non-increasing

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def d_raw(self) -> int:
        return self.components.shape[1]

    def save(self, path, meta: dict | None = None) -> None:
        container.save(path, {"mean": self.mean, "components": self.components,
                              "explained_variance": self.explained_variance}, meta)

    @classmethod
    def load(cls, path) -> "FeatureSpace":
        arrays, _ = container.load(path)
        return cls(arrays["mean"], arrays["components"], arrays["explained_variance"])


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    """Flip each row so its largest-magnitude coordinate is positive."""
    idx = np.abs(vecs).argmax(axis=1)
    signs = np.sign(vecs[np.arange(len(vecs)), idx])
    signs[signs == 0] = 1.0
    return vecs * signs[:, None]


def fit_pca(windows, k: int = 88) -> FeatureSpace:
    """Top-``k`` eigenvectors of the sample covariance of ``windows``.

    When rows are fewer than columns the same eigenpairs are obtained from
    the smaller Gram matrix.
    """
    x = np.asarray(windows, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"windows must be [n, d], got shape {x.shape}")
    n, d = x.shape
    if k < 1 or k > min(n - 1, d):
        raise ValueError(f"k={k} must lie in 1..min(n-1, d_raw)={min(n - 1, d)}")
    mean = x.mean(axis=0)
    xc = x - mean
    if d <= n:
        evals, evecs = np.linalg.eigh(xc.T @ xc / (n - 1))
        order = np.argsort(evals)[::-1][:k]
        comps = evecs[:, order].T
        var = evals[order]
    else:
        evals, evecs = np.linalg.eigh(xc @ xc.T / (n - 1))
        order = np.argsort(evals)[::-1][:k]
        var = evals[order]
        scale = np.sqrt(np.maximum(var * (n - 1), np.finfo(float).tiny))
        comps = (xc.T @ evecs[:, order] / scale).T
        # one Gram-Schmidt pass to clean up rounding in near-degenerate directions
        q, r = np.linalg.qr(comps.T)
        # zero-variance directions give r_jj = 0; keep q's orthonormal completion for them
        comps = (q * np.where(np.diag(r) < 0, -1.0, 1.0)[None, :]).T
    var = np.maximum(var, 0.0)
    return FeatureSpace(mean, _fix_signs(comps), var)


def project(space: FeatureSpace, windows) -> np.ndarray:
    x = np.atleast_2d(np.asarray(windows, dtype=np.float64))
    if x.shape[1] != space.d_raw:
        raise ValueError(f"expected {space.d_raw} columns, got {x.shape[1]}")
    return (x - space.mean) @ space.components.T


def reconstruct(space: FeatureSpace, features) -> np.ndarray:
    return np.asarray(features, dtype=np.float64) @ space.components + space.mean


class WindowPCA(BaseEstimator, TransformerMixin):
    """Transformer wrapper around :func:`fit_pca` / :func:`project`."""

    def __init__(self, n_components: int = 88):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.space_ = fit_pca(X, self.n_components)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "space_")
        return project(self.space_, check_array(X, dtype=np.float64))

    def inverse_transform(self, X):
        check_is_fitted(self, "space_")
        return reconstruct(self.space_, X)
