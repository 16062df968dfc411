"""Synthetic multi-subject activity data with a controllable cross-subject shift.

Two levels are provided. :func:`synth_domain` samples feature vectors
directly (class-conditional Gaussians pushed through a per-subject affine
map). :func:`write_raw_subjects` writes multichannel time series in the
recording ingestion format so the whole preprocessing chain can run on them.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .container import atomic_write_text
from .domain import Domain

MAX_CONDITION = 100.0


@dataclass
class SubjectSpec:
    subject_id: str
    prototypes: np.ndarray  # [n_classes, k]
    transform: np.ndarray  # A, [k, k]
    offset: np.ndarray  # b, [k]
    nonlinearity: float = 0.0
    label_noise: float = 0.0
    samples_per_class: int = 100
    sigma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        self.prototypes = np.atleast_2d(np.asarray(self.prototypes, dtype=np.float64))
        n_classes, k = self.prototypes.shape
        self.transform = np.asarray(self.transform, dtype=np.float64)
        self.offset = np.asarray(self.offset, dtype=np.float64)
        if k < 2 or n_classes < 2:
            raise ValueError("need at least 2 feature dimensions and 2 classes")
        if self.transform.shape != (k, k) or self.offset.shape != (k,):
            raise ValueError(f"transform must be [{k}, {k}] and offset [{k}]")
        if not 0.0 <= self.label_noise < 0.5:
            raise ValueError("label_noise must lie in [0, 0.5)")

    @property
    def k(self) -> int:
        return self.prototypes.shape[1]

    @property
    def n_classes(self) -> int:
        return self.prototypes.shape[0]


def synth_domain(spec: SubjectSpec, role: str = "source") -> Domain:
    """Sample ``samples_per_class`` rows per class; deterministic in ``spec.seed``."""
    if spec.sigma <= 0:
        raise ValueError("degenerate covariance: sigma must be positive")
    cond = np.linalg.cond(spec.transform)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise ValueError(f"degenerate covariance: transform condition number {cond:.3g} > {MAX_CONDITION}")
    rng = np.random.default_rng([spec.seed, 11])
    n = spec.samples_per_class
    u = np.concatenate([p + spec.sigma * rng.standard_normal((n, spec.k)) for p in spec.prototypes])
    y = np.repeat(np.arange(spec.n_classes), n)
    x = u @ spec.transform.T + spec.offset
    if spec.nonlinearity:
        x = x + spec.nonlinearity * np.sin(u)
    if spec.label_noise > 0:
        flip = rng.random(len(y)) < spec.label_noise
        shift = rng.integers(1, spec.n_classes, size=len(y))
        y = np.where(flip, (y + shift) % spec.n_classes, y)
    order = rng.permutation(len(y))
    x, y = x[order], y[order]
    if role == "target":
        return Domain(x, None, spec.subject_id, "target")
    return Domain(x, y, spec.subject_id, role)


def base_subject(k: int = 16, n_classes: int = 6, separation: float = 2.0, sigma: float = 0.5,
                 samples_per_class: int = 100, seed: int = 0, subject_id: str = "0") -> SubjectSpec:
    """Identity-transform subject whose class prototypes are ``separation`` apart on average."""
    rng = np.random.default_rng([seed, 12])
    protos = rng.standard_normal((n_classes, k))
    # mean pairwise distance of standard normals in k dims is about sqrt(2k)
    protos *= separation / np.sqrt(2.0 * k)
    return SubjectSpec(subject_id, protos, np.eye(k), np.zeros(k), sigma=sigma,
                       samples_per_class=samples_per_class, seed=seed)


def shift_direction(k: int, seed: int) -> np.ndarray:
    d = np.random.default_rng([seed, 13]).standard_normal(k)
    return d / np.linalg.norm(d)


def shift_family(base: SubjectSpec, magnitudes: Sequence[float], direction: np.ndarray | None = None,
                 ids: Sequence[str] | None = None) -> list[SubjectSpec]:
    """Subjects translated from ``base`` by each magnitude along one unit direction.

    Each member draws its own samples (different seed), so magnitude 0 gives
    a statistically identical but not bitwise identical subject.
    """
    mags = [float(m) for m in magnitudes]
    if any(m < 0 for m in mags) or mags != sorted(mags):
        raise ValueError("magnitudes must be non-negative and ascending")
    if direction is None:
        direction = shift_direction(base.k, base.seed)
    direction = np.asarray(direction, dtype=np.float64)
    direction = direction / np.linalg.norm(direction)
    out = []
    for i, mag in enumerate(mags):
        sid = ids[i] if ids is not None else f"{base.subject_id}+{mag:g}"
        out.append(replace(base, subject_id=str(sid), offset=base.offset + mag * direction,
                           seed=base.seed + 1000 * (i + 1)))
    return out


def translated_pair(shift: float, k: int = 16, n_classes: int = 6, separation: float = 2.0,
                    sigma: float = 0.5, samples_per_class: int = 100, seed: int = 0,
                    test_per_class: int | None = None) -> dict[str, Domain]:
    """Source, unlabeled target-train and labeled target-test domains for one shift.

    Keys: ``source``, ``target`` (unlabeled), ``target_labeled`` (same rows as
    ``target`` with labels, for the supervised bound) and ``target_test``.
    """
    base = base_subject(k, n_classes, separation, sigma, samples_per_class, seed, subject_id="src")
    (tgt,) = shift_family(base, [shift], ids=["tgt"])
    target_labeled = synth_domain(tgt)
    test_spec = replace(tgt, seed=tgt.seed + 7, samples_per_class=test_per_class or samples_per_class)
    return {
        "source": synth_domain(base),
        "target": target_labeled.as_target(),
        "target_labeled": target_labeled,
        "target_test": synth_domain(test_spec, role="test"),
    }


# -- raw recordings ------------------------------------------------------------

@dataclass
class RawSubjectSpec:
    subject_id: str
    shift: float = 0.0
    channels: int = 6
    n_classes: int = 6
    sample_rate_hz: float = 10.0
    runs: int = 5
    segments_per_run: int = 12
    segment_seconds: tuple = (15.0, 30.0)
    noise: float = 0.3
    missing_rate: float = 0.002
    seed: int = 0
    population_seed: int = 0
    channel_range: float = 10.0
    extra: dict = field(default_factory=dict)


def _class_signatures(channels: int, n_classes: int, seed: int):
    rng = np.random.default_rng([seed, 21])
    levels = rng.uniform(-3.0, 3.0, size=(n_classes, channels))
    freqs = rng.uniform(0.2, 2.0, size=(n_classes, channels))
    amps = rng.uniform(0.3, 1.5, size=(n_classes, channels))
    return levels, freqs, amps


def synth_recording(spec: RawSubjectSpec, run: int) -> tuple[np.ndarray, np.ndarray]:
    """One run of ``[time, channels]`` samples and raw labels (0 = null, 101.. = classes)."""
    levels, freqs, amps = _class_signatures(spec.channels, spec.n_classes, spec.population_seed)
    rng = np.random.default_rng([spec.seed, 22, run])
    srng = np.random.default_rng([spec.seed, 23])
    mix = np.eye(spec.channels) + 0.1 * spec.shift * srng.standard_normal((spec.channels, spec.channels)) / np.sqrt(spec.channels)
    offset = spec.shift * shift_direction(spec.channels, spec.seed)
    chunks, labels = [], []
    for _ in range(spec.segments_per_run):
        c = int(rng.integers(spec.n_classes))
        n = int(rng.uniform(*spec.segment_seconds) * spec.sample_rate_hz)
        t = np.arange(n) / spec.sample_rate_hz
        phase = rng.uniform(0, 2 * np.pi, size=spec.channels)
        s = levels[c] + amps[c] * np.sin(2 * np.pi * freqs[c] * t[:, None] + phase)
        s = s + spec.noise * rng.standard_normal(s.shape)
        chunks.append(s @ mix.T + offset)
        labels.append(np.full(n, 101 + c))
        gap = int(rng.uniform(1.0, 3.0) * spec.sample_rate_hz)
        chunks.append(spec.noise * rng.standard_normal((gap, spec.channels)) + offset)
        labels.append(np.zeros(gap, dtype=np.int64))
    x = np.concatenate(chunks)
    x[rng.random(x.shape) < spec.missing_rate] = np.nan
    return x, np.concatenate(labels)


def write_raw_subjects(out_dir, specs: Sequence[RawSubjectSpec]) -> list[Path]:
    """Write ``S<id>-ADL<run>.dat`` files plus ``channels.spec`` and ``labels.map``."""
    if not specs:
        raise ValueError("no subjects to write")
    out_dir = Path(out_dir)
    ref = specs[0]
    written = []
    for spec in specs:
        if (spec.channels, spec.n_classes, spec.sample_rate_hz) != (ref.channels, ref.n_classes, ref.sample_rate_hz):
            raise ValueError("all subjects must share channels, classes and sample rate")
        for run in range(1, spec.runs + 1):
            x, y = synth_recording(spec, run)
            lines = []
            for i, (row, lab) in enumerate(zip(x, y)):
                ts = int(round(1000 * i / spec.sample_rate_hz))
                vals = " ".join("NaN" if np.isnan(v) else f"{v:.6f}" for v in row)
                lines.append(f"{ts} {vals} {int(lab)}\n")
            p = out_dir / f"S{spec.subject_id}-ADL{run}.dat"
            atomic_write_text(p, "".join(lines))
            written.append(p)
    ch = ref.channels
    spec_lines = [f"label_column {ch + 2}\n", f"sample_rate_hz {ref.sample_rate_hz:g}\n",
                  f"columns 2-{ch + 1}\n"]
    spec_lines += [f"{-ref.channel_range:g} {ref.channel_range:g}\n"] * ch
    atomic_write_text(out_dir / "channels.spec", "".join(spec_lines))
    atomic_write_text(out_dir / "labels.map",
                      "0 null\n" + "".join(f"{101 + c} {c}\n" for c in range(ref.n_classes)))
    return written + [out_dir / "channels.spec", out_dir / "labels.map"]
