"""Flat ``key=value`` run configuration covering every tunable default.

Unknown keys are rejected. The digest is the SHA-256 of the canonical
rendering (sorted keys, normalized values), so it depends only on content.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .model import SaganConfig


@dataclass
class RunConfig(SaganConfig):
    # preprocessing
    window_seconds: float = 3.0
    overlap: float = 0.7
    sample_rate_hz: float = 30.0
    pca_components: int = 88
    # evaluation
    k_neighbors: int = 5
    distance_n_sub: int = 256
    distance_repeats: int = 8
    baseline_epochs: int = -1  # -1: same as epochs

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 <= self.overlap < 1.0:
            raise ValueError("overlap must lie in [0, 1)")
        if self.window_seconds <= 0 or self.sample_rate_hz <= 0:
            raise ValueError("window_seconds and sample_rate_hz must be positive")
        if self.pca_components < 1 or self.k_neighbors < 1:
            raise ValueError("pca_components and k_neighbors must be positive")

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def parse(cls, text: str, source: str = "<config>") -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{source}:{lineno}: expected key=value, got {raw!r}")
            key, _, value = (s.strip() for s in line.partition("="))
            if key not in types:
                raise KeyError(f"{source}:{lineno}: unknown config key {key!r}")
            typ = types[key] if isinstance(types[key], str) else types[key].__name__
            try:
                values[key] = int(value) if typ == "int" else float(value) if typ == "float" else value
            except ValueError as exc:
                raise ValueError(f"{source}:{lineno}: bad value for {key}: {exc}") from exc
        return cls(**values)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        return cls.parse(path.read_text(), str(path))

    def canonical(self) -> str:
        lines = []
        for key, value in sorted(asdict(self).items()):
            lines.append(f"{key}={repr(float(value)) if isinstance(value, float) else value}\n")
        return "".join(lines)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def sagan(self) -> SaganConfig:
        names = {f.name for f in fields(SaganConfig)}
        return SaganConfig(**{k: v for k, v in asdict(self).items() if k in names})

    def with_seed(self, seed: int | None) -> "RunConfig":
        if seed is None:
            return self
        return type(self)(**{**asdict(self), "seed": int(seed)})
