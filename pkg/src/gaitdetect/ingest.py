"""Raw sensor logs -> labeled fixed-rate recordings -> merged dataset.

A recording holds an ``(n, 6)`` float array in the fixed channel order
``ac_x, ac_y, ac_z, gy_x, gy_y, gy_z`` (m/s^2 and rad/s). Missing samples are
stored as NaN; every non-missing value is finite.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CHANNELS = ("ac_x", "ac_y", "ac_z", "gy_x", "gy_y", "gy_z")
N_CHANNELS = len(CHANNELS)
CANONICAL_HEADER = ("subject_id", "label") + CHANNELS
DEFAULT_RATE_HZ = 50
RECORDING_SECONDS = 60


class IngestError(ValueError):
    """Raised for unreadable, malformed or inconsistent sensor data."""


class GaitLabel(enum.IntEnum):
    NORMAL = 0
    ABNORMAL = 1

    @property
    def text(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value) -> "GaitLabel":
        if isinstance(value, GaitLabel):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise IngestError(f"unknown label {value!r}; expected 'normal' or 'abnormal'") from None
        try:
            return cls(int(value))
        except (TypeError, ValueError):
            raise IngestError(f"unknown label {value!r}") from None


@dataclass(frozen=True, eq=False)
class Recording:
    subject_id: str
    label: GaitLabel
    sample_rate_hz: int
    samples: np.ndarray

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise IngestError(f"sample rate must be positive, got {self.sample_rate_hz}")
        arr = np.array(self.samples, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[1] != N_CHANNELS:
            raise IngestError(f"samples must have shape (n, 6), got {arr.shape}")
        if np.isinf(arr).any():
            raise IngestError(f"recording {self.subject_id!r} contains infinite values")
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "label", GaitLabel.parse(self.label))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def replace(self, samples: np.ndarray) -> "Recording":
        return Recording(self.subject_id, self.label, self.sample_rate_hz, samples)


@dataclass(frozen=True, eq=False)
class Dataset:
    recordings: tuple[Recording, ...]
    provenance: tuple[str, ...] = field(default_factory=tuple)

    @property
    def sample_rate_hz(self) -> int:
        return self.recordings[0].sample_rate_hz

    @property
    def n_rows(self) -> int:
        return sum(len(r) for r in self.recordings)

    def rows_per_label(self) -> dict[GaitLabel, int]:
        counts = {GaitLabel.NORMAL: 0, GaitLabel.ABNORMAL: 0}
        for rec in self.recordings:
            counts[rec.label] += len(rec)
        return counts

    def __len__(self) -> int:
        return len(self.recordings)


def _parse_field(token: str, where: str) -> float:
    token = token.strip()
    if token == "" or token.lower() == "nan":
        return math.nan
    try:
        value = float(token)
    except ValueError:
        raise IngestError(f"{where}: non-numeric value {token!r}") from None
    if not math.isfinite(value):
        raise IngestError(f"{where}: non-finite value {token!r}")
    return value


def parse_recording(path, subject_id: str, label, rate: int = DEFAULT_RATE_HZ) -> Recording:
    """Read a raw 6-column log (one sample per line, optional channel header)."""
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"{path}: no such file")
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if lineno == 1 and tuple(t.strip().lower() for t in row) == CHANNELS:
                continue
            if len(row) != N_CHANNELS:
                raise IngestError(f"{path}:{lineno}: expected 6 fields, got {len(row)}")
            rows.append([_parse_field(t, f"{path}:{lineno}") for t in row])
    if not rows:
        raise IngestError(f"{path}: file contains no samples")
    return Recording(subject_id, GaitLabel.parse(label), rate, np.asarray(rows, dtype=np.float64))


def trim_transitions(rec: Recording, head_s: float, tail_s: float) -> Recording:
    """Drop the walk-start and walk-stop transition periods."""
    if head_s < 0 or tail_s < 0:
        raise IngestError("trim durations must be non-negative")
    head = int(round(head_s * rec.sample_rate_hz))
    tail = int(round(tail_s * rec.sample_rate_hz))
    if len(rec) <= head + tail:
        raise IngestError(
            f"recording {rec.subject_id!r} has {len(rec)} samples; trimming "
            f"{head_s}s+{tail_s}s needs more than {head + tail}"
        )
    return rec.replace(rec.samples[head:len(rec) - tail])


def check_length(rec: Recording, seconds: float = RECORDING_SECONDS) -> None:
    expected = int(round(seconds * rec.sample_rate_hz))
    if len(rec) != expected:
        raise IngestError(
            f"recording {rec.subject_id!r} has {len(rec)} samples after trimming, expected {expected} "
            f"({seconds:g} s at {rec.sample_rate_hz} Hz); pass allow_variable_length to accept"
        )


def assemble_dataset(recs: Sequence[Recording], provenance: Iterable[str] = ()) -> Dataset:
    recs = tuple(recs)
    if not recs:
        raise IngestError("cannot assemble an empty dataset")
    rates = {r.sample_rate_hz for r in recs}
    if len(rates) > 1:
        raise IngestError(f"mixed sample rates: {sorted(rates)}")
    dupes = [sid for sid, n in Counter(r.subject_id for r in recs).items() if n > 1]
    if dupes:
        raise IngestError(f"duplicate subject ids: {sorted(dupes)}")
    return Dataset(recs, tuple(str(p) for p in provenance))


def _fmt(value: float) -> str:
    return "" if math.isnan(value) else repr(float(value))


def dataset_to_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    buf.write(",".join(CANONICAL_HEADER) + "\n")
    for rec in dataset.recordings:
        prefix = f"{rec.subject_id},{rec.label.text},"
        for row in rec.samples:
            buf.write(prefix + ",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_canonical_csv(dataset: Dataset, path) -> None:
    Path(path).write_bytes(dataset_to_csv(dataset).encode("utf-8"))


def read_canonical_csv(path, rate: int = DEFAULT_RATE_HZ) -> Dataset:
    """Parse the merged ``subject_id,label,ac_x,...`` CSV back into a Dataset."""
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"{path}: no such file")
    groups: dict[str, tuple[GaitLabel, list]] = {}
    order: list[str] = []
    last = None
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CANONICAL_HEADER:
            raise IngestError(f"{path}:1: header must be {','.join(CANONICAL_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CANONICAL_HEADER):
                raise IngestError(f"{path}:{lineno}: expected 8 fields, got {len(row)}")
            sid = row[0]
            try:
                label = GaitLabel.parse(row[1])
            except IngestError as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from None
            values = [_parse_field(t, f"{path}:{lineno}") for t in row[2:]]
            if sid not in groups:
                groups[sid] = (label, [])
                order.append(sid)
            elif sid != last:
                raise IngestError(f"{path}:{lineno}: rows of subject {sid!r} are not contiguous")
            elif groups[sid][0] != label:
                raise IngestError(f"{path}:{lineno}: subject {sid!r} changes label")
            groups[sid][1].append(values)
            last = sid
    if not order:
        raise IngestError(f"{path}: file contains no samples")
    recs = [Recording(sid, groups[sid][0], rate, np.asarray(groups[sid][1])) for sid in order]
    return assemble_dataset(recs, provenance=[str(path)])


def read_recording_file(path, rate: int = DEFAULT_RATE_HZ, label=GaitLabel.NORMAL) -> Recording:
    """Load one recording from either a canonical CSV (single subject) or a raw 6-column log."""
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"{path}: no such file")
    with path.open(encoding="utf-8") as fh:
        first = fh.readline().strip()
    if first.startswith("subject_id,"):
        ds = read_canonical_csv(path, rate)
        if len(ds) != 1:
            raise IngestError(f"{path}: expected one subject, found {len(ds)}")
        return ds.recordings[0]
    return parse_recording(path, path.stem, label, rate)
