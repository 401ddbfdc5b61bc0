"""Pipeline configuration: one JSON document, validated up front, unknown keys rejected."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .classifiers import CLASSICAL_KINDS
from .cnn import default_architecture
from .preprocess import FilterSpec
from .scaling import ScalerKind
from .windowing import WindowPlan

MODEL_KINDS = CLASSICAL_KINDS + ("cnn",)
SPLIT_MODES = ("window", "subject")
PROTOCOLS = ("kfold", "holdout")

DEFAULT_MODEL_PARAMS: dict[str, dict[str, Any]] = {
    "knn": {"k": 5},
    "logreg": {"l2": 1e-4, "learning_rate": 0.1, "max_epochs": 5000, "tol": 1e-6},
    "gnb": {"var_smoothing": 1e-9},
    "svm": {"kernel": "rbf", "C": 1.0, "gamma": None, "tol": 1e-3, "max_passes": 10},
    "cnn": {"architecture": None, "learning_rate": 1e-3, "batch_size": 32, "epochs": 30},
}


class ConfigError(ValueError):
    pass


def _reject_unknown(section: str, data: dict, allowed) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(unknown)}")


@dataclass
class TrimConfig:
    head_s: float = 3.0
    tail_s: float = 3.0
    recording_s: float = 60.0
    allow_variable_length: bool = False


@dataclass
class FilterConfig:
    enabled: bool = True
    order: int = 4
    cutoff_hz: float = 10.0
    zero_phase: bool = True

    def spec(self, rate_hz: float) -> FilterSpec:
        return FilterSpec(sample_rate_hz=rate_hz, order=self.order, cutoff_hz=self.cutoff_hz,
                          zero_phase=self.zero_phase)


@dataclass
class WindowConfig:
    window_len: int = 200
    hop: int = 200

    def plan(self) -> WindowPlan:
        return WindowPlan(self.window_len, self.hop)


@dataclass
class PcaConfig:
    n_components: int | None = None
    variance_fraction: float | None = 0.95


@dataclass
class ModelConfig:
    kind: str = "svm"
    params: dict = field(default_factory=dict)

    def resolved_params(self) -> dict:
        merged = dict(DEFAULT_MODEL_PARAMS[self.kind])
        merged.update(self.params)
        return merged


@dataclass
class SplitConfig:
    mode: str = "window"
    protocol: str = "kfold"
    train_fraction: float = 0.8
    k_folds: int = 5
    stratified: bool = True


@dataclass
class PathsConfig:
    data: str | None = None
    out: str | None = None


@dataclass
class PipelineConfig:
    sample_rate_hz: int = 50
    trim: TrimConfig = field(default_factory=TrimConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    window: WindowConfig = field(default_factory=WindowConfig)
    scaler: str = "standard"
    pca: PcaConfig = field(default_factory=PcaConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    seed: int = 42
    vote_tie: str = "abnormal"
    paths: PathsConfig = field(default_factory=PathsConfig)

    def validate(self) -> "PipelineConfig":
        if int(self.sample_rate_hz) != self.sample_rate_hz or self.sample_rate_hz <= 0:
            raise ConfigError("sample_rate_hz must be a positive integer")
        if self.trim.head_s < 0 or self.trim.tail_s < 0 or self.trim.recording_s <= 0:
            raise ConfigError("trim durations must be non-negative and recording_s positive")
        try:
            if self.filter.enabled:
                self.filter.spec(self.sample_rate_hz)
            self.window.plan()
            ScalerKind(self.scaler)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.pca.n_components is not None and self.pca.variance_fraction is not None:
            raise ConfigError("pca: set either n_components or variance_fraction (other must be null)")
        if self.pca.n_components is not None and self.pca.n_components < 1:
            raise ConfigError("pca.n_components must be >= 1")
        if self.pca.variance_fraction is not None and not 0 < self.pca.variance_fraction <= 1:
            raise ConfigError("pca.variance_fraction must lie in (0, 1]")
        if self.model.kind not in MODEL_KINDS:
            raise ConfigError(f"model.kind must be one of {', '.join(MODEL_KINDS)}")
        _reject_unknown(f"model.params ({self.model.kind})", self.model.params,
                        DEFAULT_MODEL_PARAMS[self.model.kind])
        params = self.model.resolved_params()
        if self.model.kind == "knn" and (params["k"] < 1 or params["k"] % 2 == 0):
            raise ConfigError("knn k must be a positive odd integer")
        if self.model.kind == "svm" and params["C"] <= 0:
            raise ConfigError("svm C must be positive")
        if self.split.mode not in SPLIT_MODES:
            raise ConfigError(f"split.mode must be one of {SPLIT_MODES}")
        if self.split.protocol not in PROTOCOLS:
            raise ConfigError(f"split.protocol must be one of {PROTOCOLS}")
        if not 0 < self.split.train_fraction < 1:
            raise ConfigError("split.train_fraction must lie in (0, 1)")
        if self.split.k_folds < 2:
            raise ConfigError("split.k_folds must be >= 2")
        if self.vote_tie not in ("abnormal", "normal"):
            raise ConfigError("vote_tie must be 'abnormal' or 'normal'")
        if self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        return self

    def with_model(self, kind: str, params: dict | None = None) -> "PipelineConfig":
        return dataclasses.replace(self, model=ModelConfig(kind, dict(params or {}))).validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def model_params(self) -> dict:
        params = self.model.resolved_params()
        if self.model.kind == "cnn" and params["architecture"] is None:
            params["architecture"] = default_architecture()
        return params


_SECTIONS = {"trim": TrimConfig, "filter": FilterConfig, "window": WindowConfig, "pca": PcaConfig,
             "model": ModelConfig, "split": SplitConfig, "paths": PathsConfig}


def config_from_dict(data: dict) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    top = {f.name for f in dataclasses.fields(PipelineConfig)}
    _reject_unknown("config", data, top)
    kwargs = {}
    for key, value in data.items():
        section = _SECTIONS.get(key)
        if section is None:
            kwargs[key] = value
            continue
        if not isinstance(value, dict):
            raise ConfigError(f"{key} must be an object")
        _reject_unknown(key, value, {f.name for f in dataclasses.fields(section)})
        kwargs[key] = section(**value)
    return PipelineConfig(**kwargs).validate()


def load_config(path) -> PipelineConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(data)
