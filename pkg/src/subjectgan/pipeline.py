"""Per-subject train/validation/test domains in one shared PCA space.

Recording runs 1-3 of a subject form its training split, run 4 its
validation split and run 5 its test split.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .decomposition import FeatureSpace, fit_pca, project
from .domain import Domain
from .preprocessing import (ChannelSpec, RawRecording, WindowSet, concat_windows, read_recording,
                            windows_from_recording)

SPLITS = {"train": (0, 3), "validation": (3, 4), "test": (4, 5)}
SPLIT_ROLES = {"train": "source", "validation": "validation", "test": "test"}


def split_windows(recordings: Sequence[RawRecording], window_seconds: float,
                  overlap: float) -> dict[str, WindowSet]:
    sets = [windows_from_recording(r, window_seconds, overlap) for r in recordings]
    out = {}
    for split, (lo, hi) in SPLITS.items():
        chunk = sets[lo:hi]
        if chunk:
            out[split] = concat_windows(chunk)
        else:
            ref = sets[0]
            out[split] = WindowSet(np.zeros((0, ref.windows.shape[1])), np.zeros(0, dtype=np.int64),
                                   ref.window_len, ref.stride)
    return out


def assemble_from_recordings(
    recordings: Mapping[str, Sequence[RawRecording]],
    window_seconds: float = 3.0,
    overlap: float = 0.7,
    k: int = 88,
    fit_subjects: Sequence[str] | None = None,
) -> tuple[dict[str, dict[str, Domain]], FeatureSpace]:
    """Window every subject's runs, fit PCA on the pooled training windows, project all splits.

    ``fit_subjects`` restricts which subjects' training windows enter the
    PCA fit (labels are never used); by default every subject contributes.
    """
    if not recordings:
        raise ValueError("no subjects given")
    windows = {}
    for sid, recs in recordings.items():
        if not recs:
            raise ValueError(f"subject {sid} has no recordings")
        windows[str(sid)] = split_windows(recs, window_seconds, overlap)
    fit_ids = [str(s) for s in (fit_subjects if fit_subjects is not None else windows)]
    unknown = sorted(set(fit_ids) - set(windows))
    if unknown:
        raise KeyError(f"unknown subject(s) for the PCA fit: {unknown}")
    pooled = np.concatenate([windows[s]["train"].windows for s in fit_ids])
    space = fit_pca(pooled, k)
    domains = {
        sid: {split: Domain(project(space, ws.windows).reshape(-1, space.k), ws.labels, sid, SPLIT_ROLES[split])
              for split, ws in splits.items()}
        for sid, splits in windows.items()
    }
    return domains, space


def assemble_domains(
    subject_files: Mapping[str, Sequence],
    spec: ChannelSpec,
    label_map: Mapping[int, int],
    window_seconds: float = 3.0,
    overlap: float = 0.7,
    sample_rate_hz: float = 30.0,
    k: int = 88,
    fit_subjects: Sequence[str] | None = None,
) -> tuple[dict[str, dict[str, Domain]], FeatureSpace]:
    if not subject_files:
        raise ValueError("empty file list")
    recordings = {}
    for sid, files in subject_files.items():
        if not files:
            raise ValueError(f"subject {sid} has no files")
        recordings[str(sid)] = [read_recording(Path(f), spec, label_map, sample_rate_hz, str(sid))
                                for f in files]
    return assemble_from_recordings(recordings, window_seconds, overlap, k, fit_subjects)


def domain_path(data_dir, subject_id: str, split: str) -> Path:
    return Path(data_dir) / f"subject_{subject_id}_{split}.dom"


def save_domains(domains: Mapping[str, Mapping[str, Domain]], space: FeatureSpace, out_dir,
                 meta: dict | None = None) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    for sid, splits in domains.items():
        for split, dom in splits.items():
            p = domain_path(out_dir, sid, split)
            dom.save(p, meta)
            written.append(p)
    space.save(out_dir / "feature_space.ckpt", meta)
    written.append(out_dir / "feature_space.ckpt")
    return written


def load_domain(data_dir, subject_id: str, split: str) -> Domain:
    p = domain_path(data_dir, subject_id, split)
    if not p.is_file():
        raise FileNotFoundError(f"no {split} split for subject {subject_id} in {data_dir}")
    return Domain.load(p)


def list_subjects(data_dir) -> list[str]:
    ids = {p.name[len("subject_"):].rsplit("_", 1)[0] for p in Path(data_dir).glob("subject_*_train.dom")}
    return sorted(ids, key=lambda s: (len(s), s))
