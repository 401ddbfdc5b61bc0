"""Principal component analysis via eigendecomposition of the covariance matrix."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_VARIANCE_FRACTION = 0.95


class PcaError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray          # (k, d), orthonormal rows
    explained_variance: np.ndarray  # (k,), descending
    total_variance: float
    fitted_on: str = ""

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def n_features(self) -> int:
        return self.components.shape[1]

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        if self.total_variance == 0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / self.total_variance

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
            "total_variance": self.total_variance,
            "fitted_on": self.fitted_on,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        comps = np.asarray(d["components"], dtype=np.float64)
        mean = np.asarray(d["mean"], dtype=np.float64)
        return cls(mean, comps.reshape(-1, mean.size), np.asarray(d["explained_variance"], dtype=np.float64),
                   float(d["total_variance"]), d.get("fitted_on", ""))


def _orient(vectors: np.ndarray) -> np.ndarray:
    """Flip each row so that its largest-magnitude entry is positive."""
    pivot = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(vectors.shape[0]), pivot])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def fit_pca(X, n_components: int | None = None, variance_fraction: float | None = None,
            fitted_on: str = "") -> PcaModel:
    """Fit PCA on ``X`` (n x d).

    Exactly one of ``n_components`` / ``variance_fraction`` may be given;
    with neither, 95% of the variance is retained. Covariance uses the
    population (1/n) normalisation, so explained variances sum to the total
    column variance of X.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise PcaError(f"expected a 2-D matrix, got shape {X.shape}")
    n, d = X.shape
    if n < 2:
        raise PcaError(f"PCA needs at least 2 rows, got {n}")
    if n_components is not None and variance_fraction is not None:
        raise PcaError("give either n_components or variance_fraction, not both")
    if n_components is None and variance_fraction is None:
        variance_fraction = DEFAULT_VARIANCE_FRACTION
    if variance_fraction is not None and not 0 < variance_fraction <= 1:
        raise PcaError(f"variance fraction must lie in (0, 1], got {variance_fraction}")
    k_max = min(n - 1, d)
    if n_components is not None and not 1 <= n_components <= k_max:
        raise PcaError(f"n_components must be in [1, {k_max}], got {n_components}")

    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / n
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order].T
    total = float(np.trace(cov))

    if n_components is None:
        if total == 0:
            k = 1
        else:
            cumulative = np.cumsum(evals) / total
            k = int(np.searchsorted(cumulative, variance_fraction - 1e-12) + 1)
        k = max(1, min(k, k_max))
    else:
        k = int(n_components)
    return PcaModel(mean, _orient(evecs[:k]), evals[:k], total, fitted_on)


def _check_dim(actual: int, expected: int, what: str):
    if actual != expected:
        raise PcaError(f"{what}: expected {expected} columns, got {actual}")


def project(X, model: PcaModel) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _check_dim(X.shape[1], model.n_features, "project")
    return (X - model.mean) @ model.components.T


def reconstruct(Z, model: PcaModel) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    _check_dim(Z.shape[1], model.n_components, "reconstruct")
    return Z @ model.components + model.mean
