"""The end-to-end chain shared by training, evaluation and prediction.

impute -> low-pass filter -> window -> flatten -> scale -> (PCA) -> classifier

Every fitted transform carries a ``fitted_on`` tag naming the training
partition it saw, so held-out data can be checked against it.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import classifiers, cnn
from .config import ConfigError, PipelineConfig, config_from_dict
from .ingest import Dataset, GaitLabel, Recording, dataset_to_csv
from .pca import PcaModel, fit_pca, project
from .preprocess import ImputationParams, design_butterworth, filter_recording, fit_median, impute_recording
from .scaling import LeakageError, ScalerParams, fit_scaler, transform
from .windowing import WindowSet, window_layout, window_recordings

log = logging.getLogger(__name__)

BUNDLE_FORMAT = "gaitdetect-bundle/1"


class BundleError(ValueError):
    pass


def partition_tag(name: str, indices) -> str:
    """Stable identifier for a set of window indices."""
    idx = np.sort(np.asarray(indices, dtype=np.int64))
    return f"{name}:{hashlib.sha1(idx.tobytes()).hexdigest()[:12]}"


def dataset_fingerprint(dataset: Dataset) -> str:
    return "sha256:" + hashlib.sha256(dataset_to_csv(dataset).encode("utf-8")).hexdigest()


def samples_under_windows(recs: Sequence[Recording], rix: np.ndarray, starts: np.ndarray,
                          window_len: int) -> np.ndarray:
    """Raw samples covered by the given windows, each sample counted once."""
    chunks = []
    for r in np.unique(rix):
        covered = np.zeros(len(recs[r]), dtype=bool)
        for s in starts[rix == r]:
            covered[s:s + window_len] = True
        chunks.append(recs[r].samples[covered])
    return np.concatenate(chunks, axis=0)


def clean_recordings(recs: Sequence[Recording], imputation: ImputationParams,
                     config: PipelineConfig) -> list[Recording]:
    out = []
    spec = config.filter.spec(recs[0].sample_rate_hz) if config.filter.enabled else None
    for rec in recs:
        rec = impute_recording(rec, imputation)
        if spec is not None:
            rec = filter_recording(rec, spec)
        out.append(rec)
    return out


def check_fitted_on(obj, expected: str, what: str) -> None:
    if getattr(obj, "fitted_on", expected) != expected:
        raise LeakageError(f"{what} was fitted on {obj.fitted_on!r}, expected the training partition {expected!r}")


def fit_transforms(X_train: np.ndarray, config: PipelineConfig, tag: str,
                   use_pca: bool) -> tuple[ScalerParams, PcaModel | None]:
    scaler = fit_scaler(config.scaler, X_train, fitted_on=tag)
    pca = None
    if use_pca:
        pca = fit_pca(transform(X_train, scaler), n_components=config.pca.n_components,
                      variance_fraction=config.pca.variance_fraction, fitted_on=tag)
    return scaler, pca


def apply_transforms(X: np.ndarray, scaler: ScalerParams, pca: PcaModel | None,
                     expect_fitted_on: str | None = None) -> np.ndarray:
    Z = transform(X, scaler, expect_fitted_on=expect_fitted_on)
    if pca is not None:
        if expect_fitted_on is not None:
            check_fitted_on(pca, expect_fitted_on, "PCA")
        Z = project(Z, pca)
    return Z


def fit_model(kind: str, features: np.ndarray, y: np.ndarray, params: dict, seed: int,
              window_shape: tuple[int, int]):
    if kind in classifiers.CLASSICAL_KINDS:
        return classifiers.fit_classical(kind, features, y, params, seed=seed)
    net = cnn.Network.from_specs(params["architecture"], (*window_shape, 1), seed=seed)
    train_cfg = cnn.TrainConfig(learning_rate=params["learning_rate"], batch_size=params["batch_size"],
                                epochs=params["epochs"], seed=seed)
    net.loss_history = cnn.train(net, cnn.reshape_for_cnn(features, *window_shape), y, train_cfg)
    return net


def predict_model(kind: str, model, features: np.ndarray, window_shape: tuple[int, int]) -> np.ndarray:
    if kind == "cnn":
        return model.predict(cnn.reshape_for_cnn(features, *window_shape))
    return model.predict(features)


def majority_verdict(labels: np.ndarray, tie: str = "abnormal") -> GaitLabel:
    labels = np.asarray(labels)
    abnormal = int((labels == 1).sum())
    normal = labels.size - abnormal
    if abnormal == normal:
        return GaitLabel.ABNORMAL if tie == "abnormal" else GaitLabel.NORMAL
    return GaitLabel.ABNORMAL if abnormal > normal else GaitLabel.NORMAL


@dataclass(eq=False)
class FittedPipeline:
    config: PipelineConfig
    imputation: ImputationParams
    scaler: ScalerParams
    pca: PcaModel | None
    model: Any
    train_partition: str
    n_train_windows: int

    @property
    def kind(self) -> str:
        return self.config.model.kind

    @property
    def window_shape(self) -> tuple[int, int]:
        return (self.config.window.window_len, self.scaler.n_features // self.config.window.window_len)

    @property
    def feature_dim(self) -> int:
        return self.scaler.n_features

    def predict_windows(self, windows: np.ndarray) -> np.ndarray:
        flat = np.asarray(windows, dtype=np.float64).reshape(len(windows), -1)
        feats = apply_transforms(flat, self.scaler, self.pca, expect_fitted_on=self.train_partition)
        return predict_model(self.kind, self.model, feats, self.window_shape)

    def predict_recording(self, rec: Recording) -> tuple[WindowSet, np.ndarray, GaitLabel]:
        cleaned = clean_recordings([rec], self.imputation, self.config)
        ws = window_recordings(cleaned, self.config.window.plan())
        labels = self.predict_windows(ws.values)
        return ws, labels, majority_verdict(labels, self.config.vote_tie)


def fit_pipeline(dataset: Dataset, config: PipelineConfig) -> FittedPipeline:
    """Fit every stage on all windows of ``dataset``."""
    recs = list(dataset.recordings)
    plan = config.window.plan()
    rix, starts = window_layout([len(r) for r in recs], plan)
    if rix.size == 0:
        raise ConfigError("no recording is long enough for a single window")
    tag = partition_tag("all", np.arange(rix.size))
    imputation = fit_median(samples_under_windows(recs, rix, starts, plan.window_len), fitted_on=tag)
    ws = window_recordings(clean_recordings(recs, imputation, config), plan)
    flat = ws.flat()
    use_pca = config.model.kind != "cnn"
    scaler, pca = fit_transforms(flat, config, tag, use_pca)
    feats = apply_transforms(flat, scaler, pca, expect_fitted_on=tag)
    model = fit_model(config.model.kind, feats, ws.labels, config.model_params(), config.seed,
                      (plan.window_len, ws.values.shape[2]))
    return FittedPipeline(config, imputation, scaler, pca, model, tag, len(ws))


# ---------------------------------------------------------------- bundles

def bundle_to_dict(fp: FittedPipeline, data_fingerprint: str, created_at: str | None = None) -> dict:
    b, a = design_butterworth(fp.config.filter.spec(fp.config.sample_rate_hz)) \
        if fp.config.filter.enabled else (np.array([1.0]), np.array([1.0]))
    params = fp.config.model_params()
    return {
        "format": BUNDLE_FORMAT,
        "created_at": created_at or datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": fp.config.to_dict(),
        "data_fingerprint": data_fingerprint,
        "feature_dim": fp.feature_dim,
        "window_shape": list(fp.window_shape),
        "train_partition": fp.train_partition,
        "n_train_windows": fp.n_train_windows,
        "imputation": {"medians": list(fp.imputation.medians), "fitted_on": fp.imputation.fitted_on},
        "filter": {"b": b.tolist(), "a": a.tolist()},
        "scaler": fp.scaler.to_dict(),
        "pca": fp.pca.to_dict() if fp.pca is not None else None,
        "model": {"kind": fp.kind, "hyperparameters": params, "state": fp.model.to_dict()},
    }


def bundle_from_dict(d: dict) -> FittedPipeline:
    if d.get("format") != BUNDLE_FORMAT:
        raise BundleError(f"not a model bundle (format {d.get('format')!r})")
    try:
        config = config_from_dict(d["config"])
        imputation = ImputationParams(tuple(d["imputation"]["medians"]), d["imputation"]["fitted_on"])
        scaler = ScalerParams.from_dict(d["scaler"])
        pca = PcaModel.from_dict(d["pca"]) if d["pca"] is not None else None
        kind = d["model"]["kind"]
        state = d["model"]["state"]
        model = cnn.Network.from_dict(state) if kind == "cnn" else classifiers.load_classical(kind, state)
        return FittedPipeline(config, imputation, scaler, pca, model, d["train_partition"],
                              int(d["n_train_windows"]))
    except (KeyError, TypeError) as exc:
        raise BundleError(f"malformed bundle: missing or invalid {exc}") from None


def dumps_bundle(d: dict) -> str:
    return json.dumps(d, sort_keys=True, indent=1) + "\n"


def save_bundle(d: dict, path) -> None:
    Path(path).write_text(dumps_bundle(d), encoding="utf-8")


def load_bundle(path) -> FittedPipeline:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise BundleError(f"{path}: cannot read bundle ({exc})") from None
    return bundle_from_dict(d)
