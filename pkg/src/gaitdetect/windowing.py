"""Fixed-length sliding windows over recordings, plus row-major flattening."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ingest import N_CHANNELS, GaitLabel, Recording


class WindowingError(ValueError):
    pass


@dataclass(frozen=True)
class WindowPlan:
    window_len: int = 200
    hop: int = 200

    def __post_init__(self):
        if self.window_len < 1 or self.hop < 1:
            raise WindowingError(f"window_len and hop must be >= 1, got {self.window_len}, {self.hop}")

    @classmethod
    def from_seconds(cls, window_s: float, hop_s: float, rate_hz: int) -> "WindowPlan":
        return cls(int(round(window_s * rate_hz)), int(round(hop_s * rate_hz)))

    def count(self, length: int) -> int:
        if length < self.window_len:
            return 0
        return (length - self.window_len) // self.hop + 1

    def starts(self, length: int) -> np.ndarray:
        return np.arange(self.count(length)) * self.hop


@dataclass(frozen=True, eq=False)
class Window:
    values: np.ndarray
    label: GaitLabel
    subject_id: str
    start_index: int

    @property
    def shape(self):
        return self.values.shape


def slide(rec: Recording, plan: WindowPlan) -> list[Window]:
    if len(rec) < plan.window_len:
        raise WindowingError(
            f"recording {rec.subject_id!r} has {len(rec)} samples, shorter than one window ({plan.window_len})"
        )
    return [
        Window(rec.samples[s:s + plan.window_len], rec.label, rec.subject_id, int(s))
        for s in plan.starts(len(rec))
    ]


def flatten(w) -> np.ndarray:
    values = w.values if isinstance(w, Window) else np.asarray(w)
    return values.reshape(-1)


def unflatten(flat: np.ndarray, n_channels: int = N_CHANNELS) -> np.ndarray:
    flat = np.asarray(flat)
    if flat.ndim != 1 or flat.size % n_channels:
        raise WindowingError(f"vector of length {flat.size} is not a whole number of {n_channels}-channel samples")
    return flat.reshape(-1, n_channels)


@dataclass(frozen=True, eq=False)
class WindowSet:
    """Stacked windows from many recordings, in recording order then start index."""

    values: np.ndarray          # (n, window_len, 6)
    labels: np.ndarray          # (n,) int 0/1
    subject_ids: np.ndarray     # (n,) str
    start_indices: np.ndarray   # (n,)
    recording_index: np.ndarray  # (n,) position of the source recording

    def __len__(self) -> int:
        return self.values.shape[0]

    def flat(self) -> np.ndarray:
        return self.values.reshape(len(self), -1)

    def subset(self, idx) -> "WindowSet":
        return WindowSet(self.values[idx], self.labels[idx], self.subject_ids[idx],
                         self.start_indices[idx], self.recording_index[idx])


def window_recordings(recs: Sequence[Recording], plan: WindowPlan) -> WindowSet:
    values, labels, sids, starts, rix = [], [], [], [], []
    for i, rec in enumerate(recs):
        for w in slide(rec, plan):
            values.append(w.values)
            labels.append(int(w.label))
            sids.append(w.subject_id)
            starts.append(w.start_index)
            rix.append(i)
    return WindowSet(
        np.stack(values) if values else np.empty((0, plan.window_len, N_CHANNELS)),
        np.asarray(labels, dtype=np.int64),
        np.asarray(sids, dtype=object),
        np.asarray(starts, dtype=np.int64),
        np.asarray(rix, dtype=np.int64),
    )


def window_layout(lengths: Sequence[int], plan: WindowPlan) -> tuple[np.ndarray, np.ndarray]:
    """(recording index, start index) for every window, without touching sample values."""
    rix, starts = [], []
    for i, n in enumerate(lengths):
        s = plan.starts(n)
        rix.append(np.full(s.size, i, dtype=np.int64))
        starts.append(s)
    if not rix:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    return np.concatenate(rix), np.concatenate(starts)


def windows_to_csv(ws: WindowSet) -> str:
    """Canonical dataset rows plus ``window_id,start_index`` (offset of the window in its recording)."""
    from .ingest import CANONICAL_HEADER, GaitLabel

    lines = [",".join(CANONICAL_HEADER + ("window_id", "start_index"))]
    for wid in range(len(ws)):
        prefix = f"{ws.subject_ids[wid]},{GaitLabel(int(ws.labels[wid])).text},"
        for row in ws.values[wid]:
            lines.append(prefix + ",".join(repr(float(v)) for v in row) + f",{wid},{ws.start_indices[wid]}")
    return "\n".join(lines) + "\n"
