"""Confusion matrices, weighted F1 and the evaluation report record."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .container import atomic_write_text


@dataclass
class ConfusionMatrix:
    """Counts with rows = true class and columns = predicted class."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"confusion matrix must be square, got shape {c.shape}")
        if np.any(c < 0) or not np.all(np.equal(np.mod(c, 1), 0)):
            raise ValueError("confusion counts must be non-negative integers")
        self.counts = c.astype(np.int64)

    @classmethod
    def from_predictions(cls, y_true, y_pred, n_classes: int | None = None) -> "ConfusionMatrix":
        y_true = np.asarray(y_true, dtype=np.int64)
        y_pred = np.asarray(y_pred, dtype=np.int64)
        if y_true.shape != y_pred.shape:
            raise ValueError(f"{y_true.size} true labels vs {y_pred.size} predictions")
        if n_classes is None:
            n_classes = int(max(y_true.max(initial=0), y_pred.max(initial=0))) + 1
        if np.any((y_true < 0) | (y_true >= n_classes) | (y_pred < 0) | (y_pred >= n_classes)):
            raise ValueError(f"labels outside 0..{n_classes - 1}")
        counts = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(counts, (y_true, y_pred), 1)
        return cls(counts)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def per_class_scores(cm: ConfusionMatrix) -> dict[str, np.ndarray]:
    """Precision, recall and F1 per class; 0/0 ratios are taken as 0."""
    tp = np.diag(cm.counts).astype(np.float64)
    predicted = cm.counts.sum(axis=0).astype(np.float64)
    support = cm.counts.sum(axis=1).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    return {"precision": precision, "recall": recall, "f1": f1, "support": support}


def weighted_f1(cm: ConfusionMatrix) -> float:
    """Support-weighted mean of per-class F1 (zero-support classes carry no weight)."""
    if cm.total == 0:
        raise ValueError("weighted F1 of an empty confusion matrix")
    s = per_class_scores(cm)
    return float((s["f1"] * s["support"]).sum() / s["support"].sum())


def read_confusion(path) -> ConfusionMatrix:
    """Whitespace-separated integer rows; ``#`` comments and a header row of names are skipped."""
    rows = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        try:
            rows.append([int(v) for v in line])
        except ValueError:
            # tolerate a leading row label such as "C0"
            try:
                rows.append([int(v) for v in line[1:]])
            except ValueError:
                continue
    return ConfusionMatrix(np.array(rows))


MODES = ("no-transfer", "knn-pca", "sagan", "supervised")


@dataclass
class EvalReport:
    source_id: str
    target_id: str
    mode: str
    confusion: ConfusionMatrix | None
    weighted_f1: float = math.nan
    precision: list = field(default_factory=list)
    recall: list = field(default_factory=list)
    f1: list = field(default_factory=list)
    support: list = field(default_factory=list)
    wasserstein: float = math.nan
    seed: int = 0
    config_digest: str = ""
    error: str = ""

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix, source_id, target_id, mode, **kw) -> "EvalReport":
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        s = per_class_scores(cm)
        return cls(str(source_id), str(target_id), mode, cm, weighted_f1(cm),
                   s["precision"].tolist(), s["recall"].tolist(), s["f1"].tolist(),
                   s["support"].astype(int).tolist(), **kw)

    @classmethod
    def failed(cls, source_id, target_id, mode, error: str, **kw) -> "EvalReport":
        return cls(str(source_id), str(target_id), mode, None, error=error, **kw)

    @property
    def ok(self) -> bool:
        return not self.error

    def to_dict(self) -> dict:
        d = asdict(self)
        d["confusion"] = None if self.confusion is None else self.confusion.counts.tolist()
        for key in ("weighted_f1", "wasserstein"):
            if isinstance(d[key], float) and math.isnan(d[key]):
                d[key] = None
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d["confusion"] = None if d.get("confusion") is None else ConfusionMatrix(np.array(d["confusion"]))
        for key in ("weighted_f1", "wasserstein"):
            if d.get(key) is None:
                d[key] = math.nan
        return cls(**d)

    def save(self, path) -> None:
        atomic_write_text(Path(path), self.to_json())

    @classmethod
    def load(cls, path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text()))
