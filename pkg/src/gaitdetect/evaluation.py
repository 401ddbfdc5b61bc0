"""Train/test splitting, k-fold cross-validation and per-class metrics.

Abnormal (label 1) is the positive class. Every transform is refitted on
each fold's training windows; held-out windows only ever pass through
transforms whose ``fitted_on`` tag names that fold's training partition.
"""
from __future__ import annotations

import io
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .config import MODEL_KINDS, PipelineConfig, SplitConfig
from .ingest import Dataset
from .pipeline import (apply_transforms, clean_recordings, fit_model, fit_transforms, partition_tag,
                       predict_model, samples_under_windows)
from .preprocess import fit_median
from .scaling import LeakageError  # noqa: F401  (re-exported for callers checking the guard)
from .windowing import window_layout, window_recordings

log = logging.getLogger(__name__)

WINDOW_LEVEL_WARNING = (
    "window-level split: windows of one subject appear in both training and test folds, "
    "so scores may overstate accuracy on unseen people"
)
TABLE_COLUMNS = ("algorithm", "f1_normal", "f1_abnormal", "accuracy")
TABLE_DECIMALS = 4


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class SplitPlan:
    mode: str = "window"          # "window" or "subject"
    train_fraction: float = 0.8
    k_folds: int = 5
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("window", "subject"):
            raise EvaluationError(f"mode must be 'window' or 'subject', got {self.mode!r}")
        if not 0 < self.train_fraction < 1:
            raise EvaluationError("train_fraction must lie in (0, 1)")
        if self.k_folds < 2:
            raise EvaluationError("k_folds must be >= 2")

    @classmethod
    def from_config(cls, split: SplitConfig, seed: int) -> "SplitPlan":
        return cls(split.mode, split.train_fraction, split.k_folds, split.stratified, seed)


@dataclass(frozen=True)
class Fold:
    index: int
    train: np.ndarray
    test: np.ndarray

    @property
    def train_tag(self) -> str:
        return partition_tag(f"fold{self.index}/train", self.train)

    @property
    def test_tag(self) -> str:
        return partition_tag(f"fold{self.index}/test", self.test)


# ---------------------------------------------------------------- splitting

def _units(labels, subject_ids, mode):
    """Grouping units (windows or subjects) with their class and member windows."""
    labels = np.asarray(labels)
    if mode == "window":
        return [np.array([i]) for i in range(labels.size)], labels.copy()
    subject_ids = np.asarray(subject_ids)
    names = list(dict.fromkeys(subject_ids.tolist()))
    members = [np.flatnonzero(subject_ids == s) for s in names]
    unit_labels = []
    for s, m in zip(names, members):
        ls = np.unique(labels[m])
        if ls.size != 1:
            raise EvaluationError(f"subject {s!r} has windows of both classes")
        unit_labels.append(ls[0])
    return members, np.asarray(unit_labels)


def _ordered_units(unit_labels, plan: SplitPlan) -> np.ndarray:
    """Unit indices in shuffled order: class by class when stratified, otherwise all together."""
    rng = np.random.default_rng(plan.seed)
    if not plan.stratified:
        return rng.permutation(unit_labels.size)
    parts = [rng.permutation(np.flatnonzero(unit_labels == c)) for c in np.unique(unit_labels)]
    return np.concatenate(parts)


def kfold_assignments(labels, subject_ids, plan: SplitPlan) -> np.ndarray:
    """Fold id per window.

    Units are dealt round-robin over the shuffled (and, when stratified,
    class-grouped) order, so per-class fold counts differ by at most one.
    """
    labels = np.asarray(labels)
    members, unit_labels = _units(labels, subject_ids, plan.mode)
    k = plan.k_folds
    what = "windows" if plan.mode == "window" else "subjects"
    for c in (0, 1):
        have = int((unit_labels == c).sum())
        if have < 2:
            # with a single unit the fold that tests it would train without the class
            raise EvaluationError(f"class {c} has {have} {what}; need at least 2 for cross-validation")
    if unit_labels.size < k:
        raise EvaluationError(f"only {unit_labels.size} {what} for k_folds={k}")
    folds = np.empty(labels.size, dtype=np.int64)
    for pos, u in enumerate(_ordered_units(unit_labels, plan)):
        folds[members[u]] = pos % k
    return folds


def holdout_mask(labels, subject_ids, plan: SplitPlan) -> np.ndarray:
    """Boolean test mask for a single train/test split at ``plan.train_fraction``."""
    labels = np.asarray(labels)
    members, unit_labels = _units(labels, subject_ids, plan.mode)
    n_units = unit_labels.size
    n_test = n_units - int(round(n_units * plan.train_fraction))
    if n_test < 1 or n_test >= n_units:
        raise EvaluationError(f"cannot split {n_units} units at train fraction {plan.train_fraction}")
    rng = np.random.default_rng(plan.seed)
    chosen = []
    if plan.stratified:
        classes = np.unique(unit_labels)
        pools = [rng.permutation(np.flatnonzero(unit_labels == c)) for c in classes]
        exact = np.array([p.size for p in pools]) * n_test / n_units
        quota = np.floor(exact).astype(int)
        for i in np.argsort(-(exact - quota), kind="stable")[:n_test - quota.sum()]:
            quota[i] += 1
        for pool, q in zip(pools, quota):
            chosen.extend(pool[:q].tolist())
    else:
        chosen = rng.permutation(n_units)[:n_test].tolist()
    mask = np.zeros(labels.size, dtype=bool)
    for u in chosen:
        mask[members[u]] = True
    return mask


def make_folds(labels, subject_ids, plan: SplitPlan, protocol: str = "kfold") -> list[Fold]:
    n = len(labels)
    if protocol == "holdout":
        mask = holdout_mask(labels, subject_ids, plan)
        return [Fold(0, np.flatnonzero(~mask), np.flatnonzero(mask))]
    if protocol != "kfold":
        raise EvaluationError(f"unknown protocol {protocol!r}")
    assign = kfold_assignments(labels, subject_ids, plan)
    idx = np.arange(n)
    return [Fold(f, idx[assign != f], idx[assign == f]) for f in range(plan.k_folds)]


# ---------------------------------------------------------------- metrics

@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @classmethod
    def from_labels(cls, y_true, y_pred) -> "ConfusionMatrix":
        t = np.asarray(y_true) == 1
        p = np.asarray(y_pred) == 1
        return cls(int((t & p).sum()), int((~t & p).sum()), int((t & ~p).sum()), int((~t & ~p).sum()))

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    def swapped(self) -> "ConfusionMatrix":
        """The same counts seen with Normal as the positive class."""
        return ConfusionMatrix(tp=self.tn, fp=self.fn, fn=self.fp, tn=self.tp)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class MetricSet:
    accuracy: float
    normal: ClassMetrics
    abnormal: ClassMetrics
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "normal": asdict(self.normal), "abnormal": asdict(self.abnormal),
                "flags": list(self.flags)}


def _ratio(num, den, flag, flags):
    if den == 0:
        flags.append(flag)
        return 0.0
    return num / den


def _class_metrics(cm: ConfusionMatrix, name: str, flags: list) -> ClassMetrics:
    p = _ratio(cm.tp, cm.tp + cm.fp, f"{name}_precision_undefined", flags)
    r = _ratio(cm.tp, cm.tp + cm.fn, f"{name}_recall_undefined", flags)
    f1 = _ratio(2 * p * r, p + r, f"{name}_f1_undefined", flags)
    return ClassMetrics(p, r, f1)


def compute_metrics(cm: ConfusionMatrix) -> MetricSet:
    if cm.total <= 0:
        raise EvaluationError("confusion matrix is empty")
    flags: list[str] = []
    abnormal = _class_metrics(cm, "abnormal", flags)
    normal = _class_metrics(cm.swapped(), "normal", flags)
    return MetricSet((cm.tp + cm.tn) / cm.total, normal, abnormal, tuple(flags))


# ---------------------------------------------------------------- cross-validation

@dataclass
class FoldResult:
    fold: int
    n_train: int
    n_test: int
    confusion: ConfusionMatrix
    metrics: MetricSet
    provenance: dict

    def to_dict(self) -> dict:
        return {"fold": self.fold, "n_train": self.n_train, "n_test": self.n_test,
                "confusion": asdict(self.confusion), "metrics": self.metrics.to_dict(),
                "provenance": self.provenance}


@dataclass
class ModelReport:
    kind: str
    hyperparameters: dict
    folds: list[FoldResult] = field(default_factory=list)

    @property
    def pooled(self) -> ConfusionMatrix:
        cm = ConfusionMatrix()
        for f in self.folds:
            cm = cm + f.confusion
        return cm

    @property
    def metrics(self) -> MetricSet:
        return compute_metrics(self.pooled)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hyperparameters": self.hyperparameters,
                "folds": [f.to_dict() for f in self.folds],
                "pooled": {"confusion": asdict(self.pooled), "metrics": self.metrics.to_dict()}}


@dataclass
class EvaluationReport:
    protocol: str
    mode: str
    n_windows: int
    config: dict
    models: dict[str, ModelReport]
    warnings: list[str] = field(default_factory=list)
    data_source: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"protocol": self.protocol, "mode": self.mode, "n_windows": self.n_windows,
                "warnings": self.warnings, "data_source": self.data_source, "config": self.config,
                "models": {k: m.to_dict() for k, m in self.models.items()}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def table_rows(self) -> list[tuple]:
        return table_rows_from_dict(self.to_dict())

    def table(self) -> str:
        return format_table(self.table_rows())


def table_rows_from_dict(report: dict) -> list[tuple]:
    rows = []
    for kind, m in report["models"].items():
        met = m["pooled"]["metrics"]
        rows.append((kind, round(met["normal"]["f1"], TABLE_DECIMALS),
                     round(met["abnormal"]["f1"], TABLE_DECIMALS), round(met["accuracy"], TABLE_DECIMALS)))
    return rows


def format_table(rows: Iterable[tuple]) -> str:
    buf = io.StringIO()
    buf.write(",".join(TABLE_COLUMNS) + "\n")
    for kind, f1n, f1a, acc in rows:
        buf.write(f"{kind},{f1n:.{TABLE_DECIMALS}f},{f1a:.{TABLE_DECIMALS}f},{acc:.{TABLE_DECIMALS}f}\n")
    return buf.getvalue()


def transform_heldout(X_test, scaler, pca, fold: Fold) -> np.ndarray:
    """Held-out features; refuses transforms not fitted on ``fold``'s training partition."""
    return apply_transforms(X_test, scaler, pca, expect_fitted_on=fold.train_tag)


def _fold_transforms(fold: Fold, X_train, X_test, config: PipelineConfig, use_pca: bool):
    # single seam for fitting the fold's scaler/PCA (tests swap it to provoke the leakage guard)
    return fit_transforms(X_train, config, fold.train_tag, use_pca)


def cross_validate(dataset: Dataset, config: PipelineConfig, plan: SplitPlan | None = None,
                   models: Sequence[str] | None = None, protocol: str | None = None) -> EvaluationReport:
    """Evaluate one or more model kinds under a shared, per-fold refitted preprocessing chain."""
    config.validate()
    plan = plan or SplitPlan.from_config(config.split, config.seed)
    protocol = protocol or config.split.protocol
    kinds = list(models) if models else [config.model.kind]
    for k in kinds:
        if k not in MODEL_KINDS:
            raise EvaluationError(f"unknown model kind {k!r}")
    if not kinds:
        raise EvaluationError("no model configured")

    recs = list(dataset.recordings)
    wplan = config.window.plan()
    rix, starts = window_layout([len(r) for r in recs], wplan)
    labels = np.array([int(recs[r].label) for r in rix], dtype=np.int64)
    subjects = np.array([recs[r].subject_id for r in rix], dtype=object)
    folds = make_folds(labels, subjects, plan, protocol)

    warnings = []
    if plan.mode == "window":
        warnings.append(WINDOW_LEVEL_WARNING)
        log.warning(WINDOW_LEVEL_WARNING)

    any_missing = any(np.isnan(r.samples).any() for r in recs)
    shared_windows = None
    reports = {}
    for k in kinds:
        cfg = config.with_model(k, config.model.params if k == config.model.kind else None)
        reports[k] = ModelReport(k, cfg.model_params())

    for fold in folds:
        tag = fold.train_tag
        imputation = fit_median(samples_under_windows(recs, rix[fold.train], starts[fold.train],
                                                      wplan.window_len), fitted_on=tag)
        if any_missing or shared_windows is None:
            ws = window_recordings(clean_recordings(recs, imputation, config), wplan)
            if not any_missing:
                shared_windows = ws
        else:
            ws = shared_windows
        flat = ws.flat()
        X_train, X_test = flat[fold.train], flat[fold.test]
        y_train, y_test = ws.labels[fold.train], ws.labels[fold.test]
        window_shape = (wplan.window_len, ws.values.shape[2])
        cache = {}
        for k in kinds:
            use_pca = k != "cnn"
            if use_pca not in cache:
                scaler, pca = _fold_transforms(fold, X_train, X_test, config, use_pca)
                check = transform_heldout(X_train, scaler, pca, fold)
                cache[use_pca] = (scaler, pca, check, transform_heldout(X_test, scaler, pca, fold))
            scaler, pca, F_train, F_test = cache[use_pca]
            model = fit_model(k, F_train, y_train, reports[k].hyperparameters, config.seed, window_shape)
            pred = predict_model(k, model, F_test, window_shape)
            cm = ConfusionMatrix.from_labels(y_test, pred)
            provenance = {"train_partition": tag, "test_partition": fold.test_tag,
                          "imputation": imputation.fitted_on, "scaler": scaler.fitted_on,
                          "pca": pca.fitted_on if pca is not None else None,
                          "pca_components": pca.n_components if pca is not None else None}
            reports[k].folds.append(FoldResult(fold.index, fold.train.size, fold.test.size, cm,
                                               compute_metrics(cm), provenance))
            log.info("fold %d %s accuracy %.4f", fold.index, k, reports[k].folds[-1].metrics.accuracy)

    return EvaluationReport(protocol, plan.mode, int(labels.size), config.to_dict(), reports, warnings,
                            list(dataset.provenance))
