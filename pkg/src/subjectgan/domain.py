from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import container

ROLES = ("source", "target", "validation", "test")


@dataclass
class Domain:
    """A feature matrix from one subject, labeled unless it plays the target role."""

    features: np.ndarray
    labels: np.ndarray | None
    subject_id: str
    role: str = "source"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError(f"features must be [n, k], got shape {self.features.shape}")
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        self.subject_id = str(self.subject_id)
        if self.role == "target":
            if self.labels is not None:
                raise ValueError("a target domain must be unlabeled")
        else:
            if self.labels is None:
                raise ValueError(f"a {self.role} domain must be labeled")
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.features),):
                raise ValueError(f"{len(self.labels)} labels for {len(self.features)} rows")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def k(self) -> int:
        return self.features.shape[1]

    def as_target(self) -> "Domain":
        return Domain(self.features, None, self.subject_id, "target")

    def with_role(self, role: str) -> "Domain":
        return Domain(self.features, self.labels, self.subject_id, role)

    def save(self, path, meta: dict | None = None) -> None:
        arrays = {"features": self.features}
        if self.labels is not None:
            arrays["labels"] = self.labels.astype(np.float64)
        info = {"subject_id": self.subject_id, "role": self.role}
        info.update(meta or {})
        container.save(path, arrays, info)

    @classmethod
    def load(cls, path) -> "Domain":
        arrays, meta = container.load(Path(path))
        labels = arrays.get("labels")
        return cls(arrays["features"], None if labels is None else labels.astype(np.int64),
                   meta["subject_id"], meta["role"])
