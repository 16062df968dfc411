"""Raw sensor recordings to labeled windows: imputation, range scaling, segmentation.

Ingestion formats
-----------------
Recording files
    Whitespace-separated numeric columns, one sample per line. ``NaN`` marks
    a missing value. Lines starting with ``#`` are ignored.

Channel spec
    ``label_column N``       1-based index of the label column (required)
    ``sample_rate_hz R``     optional, overrides the configured rate
    ``columns A-B,C,...``    optional 1-based channel column selection;
                             default is every column except the label column
    ``MIN MAX``              one line per selected channel, in order

Label map
    ``RAW_CODE CLASS_ID`` per line; ``CLASS_ID`` may be ``null`` for samples
    that belong to no class. Class ids must be contiguous from 0.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

NULL_LABEL = -1


class ParseError(ValueError):
    pass


@dataclass
class RawRecording:
    samples: np.ndarray  # [time, channels], NaN = missing
    labels: np.ndarray  # [time], NULL_LABEL = unlabeled
    channel_ranges: np.ndarray  # [channels, 2]
    sample_rate_hz: float = 30.0
    subject_id: str = ""
    file_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ValueError(f"samples must be [time, channels], got {self.samples.shape}")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.samples.shape[0],):
            raise ValueError(f"{self.labels.size} labels for {self.samples.shape[0]} samples")
        self.channel_ranges = np.asarray(self.channel_ranges, dtype=np.float64)
        if self.channel_ranges.shape != (self.samples.shape[1], 2):
            raise ValueError(f"channel_ranges must be [{self.samples.shape[1]}, 2], "
                             f"got {self.channel_ranges.shape}")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")


@dataclass
class WindowSet:
    windows: np.ndarray  # [n, window_len * channels], time-major rows
    labels: np.ndarray
    window_len: int
    stride: int
    short: bool = False
    source_files: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.windows)


def impute_missing(rec: RawRecording) -> RawRecording:
    """Replace missing cells with the mean of the observed cells of their channel."""
    x = rec.samples
    observed = ~np.isnan(x)
    empty = np.flatnonzero(~observed.any(axis=0))
    if empty.size:
        raise ValueError(f"channel {empty[0]} has no observed values")
    if observed.all():
        return replace(rec, samples=x.copy())
    means = np.nansum(x, axis=0) / observed.sum(axis=0)
    return replace(rec, samples=np.where(observed, x, means[None, :]))


def normalize(rec: RawRecording) -> RawRecording:
    """Map each channel affinely from its declared [min, max] onto [-1, 1], clipping first."""
    lo, hi = rec.channel_ranges[:, 0], rec.channel_ranges[:, 1]
    bad = np.flatnonzero(lo >= hi)
    if bad.size:
        raise ValueError(f"channel {bad[0]} has min >= max ({lo[bad[0]]}, {hi[bad[0]]})")
    x = np.clip(rec.samples, lo, hi)
    return replace(rec, samples=2.0 * (x - lo) / (hi - lo) - 1.0)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def window_geometry(window_seconds: float, overlap: float, sample_rate_hz: float) -> tuple[int, int]:
    """``(window_len, stride)`` in samples; the stride never drops below one sample."""
    if not 0.0 <= overlap < 1.0:
        raise ValueError(f"overlap must lie in [0, 1), got {overlap}")
    window_len = _round_half_up(window_seconds * sample_rate_hz)
    if window_len < 1:
        raise ValueError("window shorter than one sample")
    return window_len, max(1, _round_half_up(window_len * (1.0 - overlap)))


def window_count(time: int, window_len: int, stride: int) -> int:
    return 0 if time < window_len else (time - window_len) // stride + 1


def majority_labels(labels: np.ndarray, starts: np.ndarray, window_len: int) -> np.ndarray:
    """Per-window majority class, lowest id on ties, NULL_LABEL when nothing is labeled."""
    valid = labels >= 0
    if not valid.any():
        return np.full(len(starts), NULL_LABEL)
    n_classes = int(labels[valid].max()) + 1
    onehot = np.zeros((len(labels) + 1, n_classes), dtype=np.int64)
    onehot[1:][valid, labels[valid]] = 1
    csum = np.cumsum(onehot, axis=0)
    counts = csum[starts + window_len] - csum[starts]
    out = counts.argmax(axis=1)  # first maximum = lowest id
    out[counts.sum(axis=1) == 0] = NULL_LABEL
    return out


def segment(rec: RawRecording, window_seconds: float = 3.0, overlap: float = 0.7) -> WindowSet:
    """Sliding windows fully inside the recording; unlabeled windows are dropped."""
    window_len, stride = window_geometry(window_seconds, overlap, rec.sample_rate_hz)
    t, ch = rec.samples.shape
    n = window_count(t, window_len, stride)
    if n == 0:
        warnings.warn(f"recording {rec.file_id or '?'} ({t} samples) is shorter than one window "
                      f"({window_len} samples)", stacklevel=2)
        return WindowSet(np.zeros((0, window_len * ch)), np.zeros(0, dtype=np.int64),
                         window_len, stride, short=True)
    starts = np.arange(n) * stride
    view = np.lib.stride_tricks.sliding_window_view(rec.samples, window_len, axis=0)[starts]
    windows = view.transpose(0, 2, 1).reshape(n, window_len * ch)
    labels = majority_labels(rec.labels, starts, window_len)
    keep = labels != NULL_LABEL
    return WindowSet(np.ascontiguousarray(windows[keep]), labels[keep], window_len, stride,
                     source_files=[rec.file_id])


def concat_windows(sets: Sequence[WindowSet]) -> WindowSet:
    if not sets:
        raise ValueError("no window sets to concatenate")
    geo = {(s.window_len, s.stride) for s in sets}
    if len(geo) != 1:
        raise ValueError(f"window sets disagree on geometry: {sorted(geo)}")
    wl, st = geo.pop()
    return WindowSet(np.concatenate([s.windows for s in sets]), np.concatenate([s.labels for s in sets]),
                     wl, st, short=all(s.short for s in sets),
                     source_files=[f for s in sets for f in s.source_files])


# -- ingestion -------------------------------------------------------------

@dataclass
class ChannelSpec:
    label_column: int  # 1-based
    ranges: np.ndarray  # [channels, 2]
    columns: list[int] | None = None  # 1-based channel columns
    sample_rate_hz: float | None = None

    def channel_columns(self, n_columns: int) -> list[int]:
        if self.columns is not None:
            return self.columns
        return [c for c in range(1, n_columns + 1) if c != self.label_column]


def _parse_columns(text: str, where: str) -> list[int]:
    cols = []
    for part in text.split(","):
        m = re.fullmatch(r"\s*(\d+)\s*(?:-\s*(\d+)\s*)?", part)
        if not m:
            raise ParseError(f"{where}: bad column selection {part!r}")
        a = int(m.group(1))
        b = int(m.group(2) or a)
        cols.extend(range(a, b + 1))
    return cols


def read_channel_spec(path) -> ChannelSpec:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"channel spec not found: {path}")
    label_column = None
    columns = None
    rate = None
    ranges = []
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{path}:{lineno}"
        parts = line.split()
        key = parts[0].lower()
        try:
            if key == "label_column":
                label_column = int(parts[1])
            elif key == "sample_rate_hz":
                rate = float(parts[1])
            elif key == "columns":
                columns = _parse_columns(" ".join(parts[1:]), where)
            elif len(parts) == 2:
                lo, hi = float(parts[0]), float(parts[1])
                if not lo < hi:
                    raise ParseError(f"{where}: min {lo} is not below max {hi}")
                ranges.append((lo, hi))
            else:
                raise ParseError(f"{where}: expected 'MIN MAX' or a directive, got {raw!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"{where}: {exc}") from exc
    if label_column is None:
        raise ParseError(f"{path}: missing 'label_column' directive")
    if not ranges:
        raise ParseError(f"{path}: no channel ranges")
    if columns is not None and len(columns) != len(ranges):
        raise ParseError(f"{path}: {len(columns)} columns selected but {len(ranges)} ranges given")
    return ChannelSpec(label_column, np.array(ranges), columns, rate)


def read_label_map(path) -> dict[int, int]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"label map not found: {path}")
    mapping: dict[int, int] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"{path}:{lineno}: expected 'RAW_CODE CLASS_ID', got {raw!r}")
        try:
            code = int(float(parts[0]))
            cls = NULL_LABEL if parts[1].lower() == "null" else int(parts[1])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        mapping[code] = cls
    ids = sorted({c for c in mapping.values() if c != NULL_LABEL})
    if ids != list(range(len(ids))):
        raise ParseError(f"{path}: class ids must be contiguous from 0, got {ids}")
    return mapping


def _load_matrix(path: Path) -> np.ndarray:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            data = np.loadtxt(path, dtype=np.float64, comments="#", ndmin=2)
    except ValueError:
        width = None
        for lineno, raw in enumerate(path.read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                [float(p) for p in parts]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise ParseError(f"{path}:{lineno}: expected {width} columns, got {len(parts)}")
        raise ParseError(f"{path}: unreadable numeric table") from None
    return data


def read_recording(path, spec: ChannelSpec, label_map: Mapping[int, int],
                   sample_rate_hz: float = 30.0, subject_id: str = "") -> RawRecording:
    path = Path(path)
    data = _load_matrix(path)
    n_cols = data.shape[1]
    if not 1 <= spec.label_column <= n_cols:
        raise ParseError(f"{path}: label column {spec.label_column} outside 1..{n_cols}")
    cols = spec.channel_columns(n_cols)
    if any(not 1 <= c <= n_cols for c in cols):
        raise ParseError(f"{path}: channel column selection exceeds {n_cols} columns")
    if len(cols) != len(spec.ranges):
        raise ParseError(f"{path}: {len(cols)} channel columns but {len(spec.ranges)} ranges in channel spec")
    raw_labels = data[:, spec.label_column - 1]
    labels = np.full(len(data), NULL_LABEL, dtype=np.int64)
    for row, code in enumerate(raw_labels):
        if np.isnan(code):
            continue
        cls = label_map.get(int(code))
        if cls is None:
            raise ValueError(f"{path}: unknown label code {int(code)} at row {row}")
        labels[row] = cls
    rate = spec.sample_rate_hz or sample_rate_hz
    return RawRecording(data[:, [c - 1 for c in cols]], labels, spec.ranges, rate,
                        subject_id=subject_id, file_id=path.name)


_FILE_RE = re.compile(r"^S(?P<subject>[^-]+)-ADL(?P<run>\d+)\.(?:dat|txt)$")


def discover_subject_files(in_dir) -> dict[str, list[Path]]:
    """Group ``S<subject>-ADL<n>.dat`` files by subject, ordered by run number."""
    in_dir = Path(in_dir)
    if not in_dir.is_dir():
        raise FileNotFoundError(f"input directory not found: {in_dir}")
    found: dict[str, list[tuple[int, Path]]] = {}
    for p in in_dir.iterdir():
        m = _FILE_RE.match(p.name)
        if m:
            found.setdefault(m.group("subject"), []).append((int(m.group("run")), p))
    return {s: [p for _, p in sorted(v)] for s, v in sorted(found.items())}


def windows_from_recording(rec: RawRecording, window_seconds: float, overlap: float) -> WindowSet:
    return segment(normalize(impute_missing(rec)), window_seconds, overlap)


class SensorWindower(BaseEstimator, TransformerMixin):
    """Imputation, range normalization and segmentation as a stateless transformer.

    ``transform`` takes a :class:`RawRecording` (or a list of them) and returns
    the flattened windows; the matching labels are left in ``labels_``.
    """

    def __init__(self, window_seconds: float = 3.0, overlap: float = 0.7):
        self.window_seconds = window_seconds
        self.overlap = overlap

    def fit(self, X=None, y=None):
        window_geometry(self.window_seconds, self.overlap, 1.0)
        return self

    def transform(self, X):
        recs = [X] if isinstance(X, RawRecording) else list(X)
        ws = concat_windows([windows_from_recording(r, self.window_seconds, self.overlap) for r in recs])
        self.labels_ = ws.labels
        return ws.windows
