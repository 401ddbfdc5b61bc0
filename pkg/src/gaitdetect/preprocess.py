"""Median imputation, Butterworth low-pass noise filtering and label encoding."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .ingest import CHANNELS, N_CHANNELS, GaitLabel, Recording


class PreprocessError(ValueError):
    pass


@dataclass(frozen=True)
class FilterSpec:
    sample_rate_hz: float = 50.0
    order: int = 4
    cutoff_hz: float = 10.0
    zero_phase: bool = True

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise PreprocessError(f"filter order must be a positive integer, got {self.order}")
        if self.sample_rate_hz <= 0:
            raise PreprocessError(f"sample rate must be positive, got {self.sample_rate_hz}")
        nyquist = self.sample_rate_hz / 2
        if not 0 < self.cutoff_hz < nyquist:
            raise PreprocessError(
                f"cutoff {self.cutoff_hz} Hz must lie strictly between 0 and Nyquist ({nyquist} Hz)"
            )

    @property
    def padlen(self) -> int:
        return 3 * self.order


@dataclass(frozen=True)
class ImputationParams:
    medians: tuple[float, ...]
    fitted_on: str = ""

    def __post_init__(self):
        if len(self.medians) != N_CHANNELS:
            raise PreprocessError(f"need {N_CHANNELS} medians, got {len(self.medians)}")
        if not all(math.isfinite(m) for m in self.medians):
            raise PreprocessError("imputation medians must be finite")


def fit_median(data: np.ndarray, fitted_on: str = "") -> ImputationParams:
    """Per-channel median of the non-missing (non-NaN) values."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != N_CHANNELS:
        raise PreprocessError(f"expected (n, 6) samples, got shape {data.shape}")
    medians = []
    for j, name in enumerate(CHANNELS):
        col = data[:, j]
        col = col[~np.isnan(col)]
        if col.size == 0:
            raise PreprocessError(f"channel {name} has no non-missing values")
        medians.append(float(np.median(col)))
    return ImputationParams(tuple(medians), fitted_on)


def impute(data: np.ndarray, params: ImputationParams) -> np.ndarray:
    data = np.array(data, dtype=np.float64, copy=True)
    holes = np.isnan(data)
    if holes.any():
        data[holes] = np.broadcast_to(np.asarray(params.medians), data.shape)[holes]
    return data


def impute_recording(rec: Recording, params: ImputationParams) -> Recording:
    return rec.replace(impute(rec.samples, params))


def design_butterworth(spec: FilterSpec) -> tuple[np.ndarray, np.ndarray]:
    """Digital low-pass Butterworth coefficients ``(b, a)`` with ``a[0] == 1``.

    Analog prototype poles sit evenly on the left half of the unit circle,
    scaled to the pre-warped cutoff and mapped through the bilinear
    transform; all zeros land on z = -1. The gain is fixed so that the DC
    response is exactly one.
    """
    n = int(spec.order)
    fs = float(spec.sample_rate_hz)
    warped = 2.0 * fs * math.tan(math.pi * spec.cutoff_hz / fs)
    k = np.arange(1, n + 1)
    analog_poles = warped * np.exp(1j * math.pi * (2 * k + n - 1) / (2 * n))
    z_poles = (2 * fs + analog_poles) / (2 * fs - analog_poles)
    a = np.real(np.poly(z_poles))
    b = np.real(np.poly(-np.ones(n)))
    b *= a.sum() / b.sum()
    return b / a[0], a / a[0]


def frequency_response(b: np.ndarray, a: np.ndarray, freqs_hz: np.ndarray, fs: float) -> np.ndarray:
    w = 2 * np.pi * np.asarray(freqs_hz, dtype=np.float64) / fs
    z_inv = np.exp(-1j * w)
    return np.polyval(b[::-1], z_inv) / np.polyval(a[::-1], z_inv)


def _odd_extend(x: np.ndarray, padlen: int) -> np.ndarray:
    left = 2 * x[0] - x[padlen:0:-1]
    right = 2 * x[-1] - x[-2:-padlen - 2:-1]
    return np.concatenate([left, x, right], axis=0)


def _lfilter_steady(b, a, x):
    zi = signal.lfilter_zi(b, a)
    y, _ = signal.lfilter(b, a, x, axis=0, zi=np.multiply.outer(zi, x[0]))
    return y


def apply_filter(x: np.ndarray, spec: FilterSpec, coeffs=None) -> np.ndarray:
    """Filter each column of ``x`` (time along axis 0).

    The zero-phase path uses Gustafsson's initial conditions, which make the
    forward-backward and backward-forward results coincide; filtering a
    time-reversed signal then gives the time-reversed output.
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    padlen = spec.padlen
    if x.shape[0] <= padlen:
        raise PreprocessError(
            f"signal of {x.shape[0]} samples is too short for order-{spec.order} filtering "
            f"(needs more than {padlen})"
        )
    b, a = coeffs if coeffs is not None else design_butterworth(spec)
    ext = _odd_extend(x, padlen)
    if spec.zero_phase:
        y = signal.filtfilt(b, a, ext, axis=0, method="gust")
    else:
        y = _lfilter_steady(b, a, ext)
    y = y[padlen:-padlen]
    return y[:, 0] if squeeze else y


def filter_recording(rec: Recording, spec: FilterSpec) -> Recording:
    if np.isnan(rec.samples).any():
        raise PreprocessError(f"recording {rec.subject_id!r} still has missing values; impute first")
    return rec.replace(apply_filter(rec.samples, spec))


def encode_label(label) -> int:
    return int(GaitLabel.parse(label))


def decode_label(code: int) -> GaitLabel:
    return GaitLabel(int(code))
