"""Standard and robust per-feature scaling, fitted on training data only."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class ScalingError(ValueError):
    pass


class LeakageError(RuntimeError):
    """A transform fitted on something other than the current training partition was applied."""


class ScalerKind(str, enum.Enum):
    STANDARD = "standard"
    ROBUST = "robust"


@dataclass(frozen=True, eq=False)
class ScalerParams:
    kind: ScalerKind
    center: np.ndarray
    scale: np.ndarray
    fitted_on: str = ""

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64)
        scale = np.asarray(self.scale, dtype=np.float64)
        if center.shape != scale.shape or center.ndim != 1:
            raise ScalingError("center and scale must be vectors of equal length")
        if (scale < 0).any():
            raise ScalingError("scale entries must be non-negative")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "kind", ScalerKind(self.kind))

    @property
    def n_features(self) -> int:
        return self.center.size

    @property
    def zero_scale(self) -> np.ndarray:
        return self.scale == 0

    def _divisor(self) -> np.ndarray:
        return np.where(self.scale == 0, 1.0, self.scale)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "center": self.center.tolist(),
                "scale": self.scale.tolist(), "fitted_on": self.fitted_on}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(ScalerKind(d["kind"]), np.asarray(d["center"]), np.asarray(d["scale"]), d.get("fitted_on", ""))


def fit_scaler(kind, X: np.ndarray, fitted_on: str = "") -> ScalerParams:
    """Standard: column mean / population std. Robust: column median / IQR (linear quantiles)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ScalingError(f"need a non-empty 2-D matrix, got shape {X.shape}")
    kind = ScalerKind(kind)
    if kind is ScalerKind.STANDARD:
        center = X.mean(axis=0)
        scale = X.std(axis=0)
    else:
        q1, center, q3 = np.percentile(X, [25, 50, 75], axis=0)
        scale = q3 - q1
    return ScalerParams(kind, center, scale, fitted_on)


def _check(X, params: ScalerParams, expect_fitted_on: str | None) -> np.ndarray:
    if expect_fitted_on is not None and params.fitted_on != expect_fitted_on:
        raise LeakageError(
            f"scaler was fitted on {params.fitted_on!r} but the current training partition is "
            f"{expect_fitted_on!r}"
        )
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.n_features:
        raise ScalingError(f"expected {params.n_features} columns, got shape {X.shape}")
    return X


def transform(X, params: ScalerParams, expect_fitted_on: str | None = None) -> np.ndarray:
    X = _check(X, params, expect_fitted_on)
    return (X - params.center) / params._divisor()


def inverse_transform(X, params: ScalerParams) -> np.ndarray:
    X = _check(X, params, None)
    return X * params._divisor() + params.center
