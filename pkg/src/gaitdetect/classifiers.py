"""Binary classifiers: k-nearest neighbours, logistic regression,
Gaussian naive Bayes and a kernel SVM trained with SMO.

Labels are 0 (normal) / 1 (abnormal) everywhere in the public API.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class ClassifierError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


def _as_xy(X, y=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ClassifierError(f"expected a non-empty 2-D feature matrix, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ClassifierError("feature matrix contains non-finite values")
    if y is None:
        return X
    y = np.asarray(y)
    if y.shape != (X.shape[0],):
        raise ClassifierError(f"label vector has shape {y.shape}, expected ({X.shape[0]},)")
    if not np.isin(y, (0, 1)).all():
        raise ClassifierError("labels must be binary 0/1")
    return X, y.astype(np.int64)


def _queries(Q, d):
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    if Q.shape[1] != d:
        raise ClassifierError(f"expected {d} features, got {Q.shape[1]}")
    return Q


# ---------------------------------------------------------------- kNN

@dataclass(eq=False)
class KnnModel:
    X: np.ndarray
    y: np.ndarray
    k: int = 5

    kind = "knn"

    def neighbours(self, Q) -> np.ndarray:
        """Indices of the k nearest training rows; distance ties go to the lower index."""
        Q = _queries(Q, self.X.shape[1])
        out = np.empty((Q.shape[0], self.k), dtype=np.int64)
        step = max(1, int(2e7 // max(1, self.X.size)))
        for lo in range(0, Q.shape[0], step):
            diff = Q[lo:lo + step, None, :] - self.X[None, :, :]
            dist = np.einsum("qnd,qnd->qn", diff, diff)
            out[lo:lo + step] = np.argsort(dist, axis=1, kind="stable")[:, :self.k]
        return out

    def predict(self, Q) -> np.ndarray:
        votes = self.y[self.neighbours(Q)].sum(axis=1)
        return (2 * votes > self.k).astype(np.int64)

    def to_dict(self) -> dict:
        return {"k": self.k, "X": self.X.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, d):
        X = np.asarray(d["X"], dtype=np.float64)
        return cls(X.reshape(len(d["y"]), -1), np.asarray(d["y"], dtype=np.int64), int(d["k"]))


def knn_fit(X, y, k: int = 5) -> KnnModel:
    X, y = _as_xy(X, y)
    if k < 1 or k % 2 == 0:
        raise ClassifierError(f"k must be a positive odd integer, got {k}")
    if k > X.shape[0]:
        raise ClassifierError(f"k={k} exceeds the {X.shape[0]} training rows")
    return KnnModel(X.copy(), y.copy(), int(k))


def knn_predict(model: KnnModel, Q) -> np.ndarray:
    return model.predict(Q)


# ---------------------------------------------------------------- logistic regression

def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def logreg_loss_grad(w, b, X, y, l2: float):
    """Mean negative log-likelihood + (l2/2)|w|^2, and its gradient (dw, db)."""
    with np.errstate(over="ignore", invalid="ignore"):
        z = X @ w + b
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w))
        r = _sigmoid(z) - y
    return loss, X.T @ r / X.shape[0] + l2 * w, float(r.mean())


@dataclass(eq=False)
class LogRegModel:
    weights: np.ndarray
    bias: float = 0.0
    l2: float = 1e-4
    learning_rate: float = 0.1
    max_epochs: int = 5000
    tol: float = 1e-6
    trained: bool = False
    converged: bool = False
    epochs_run: int = 0
    loss_history: list = field(default_factory=list, repr=False)

    kind = "logreg"

    def predict_proba(self, Q) -> np.ndarray:
        Q = _queries(Q, self.weights.size)
        return _sigmoid(Q @ self.weights + self.bias)

    def predict(self, Q) -> np.ndarray:
        return (self.predict_proba(Q) >= 0.5).astype(np.int64)

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias, "l2": self.l2,
                "learning_rate": self.learning_rate, "max_epochs": self.max_epochs, "tol": self.tol,
                "trained": self.trained, "converged": self.converged, "epochs_run": self.epochs_run}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        w = np.asarray(d.pop("weights"), dtype=np.float64)
        return cls(w, **d)


def logreg_fit(X, y, l2: float = 1e-4, learning_rate: float = 0.1, max_epochs: int = 5000,
               tol: float = 1e-6) -> LogRegModel:
    """Full-batch gradient descent; the step is halved whenever it would raise the loss."""
    X, y = _as_xy(X, y)
    if l2 < 0 or learning_rate < 0:
        raise ClassifierError("l2 and learning_rate must be non-negative")
    model = LogRegModel(np.zeros(X.shape[1]), 0.0, l2, learning_rate, max_epochs, tol)
    w, b = model.weights.copy(), 0.0
    loss, gw, gb = logreg_loss_grad(w, b, X, y, l2)
    history = [loss]
    lr = learning_rate
    epochs = 0
    while epochs < max_epochs and max(np.abs(gw).max(initial=0.0), abs(gb)) >= tol:
        while True:
            w_new, b_new = w - lr * gw, b - lr * gb
            new_loss, new_gw, new_gb = logreg_loss_grad(w_new, b_new, X, y, l2)
            if not np.isfinite(new_loss):
                raise ConvergenceError(
                    f"logistic regression loss became non-finite at epoch {epochs + 1}; "
                    "lower the learning rate"
                )
            if new_loss <= loss or lr < 1e-12:
                break
            lr *= 0.5
        if new_loss > loss:
            break  # no descent step left at machine precision
        w, b, loss, gw, gb = w_new, b_new, new_loss, new_gw, new_gb
        history.append(loss)
        epochs += 1
    model.converged = bool(max(np.abs(gw).max(initial=0.0), abs(gb)) < tol)
    model.weights, model.bias = w, float(b)
    model.trained = True
    model.epochs_run = epochs
    model.loss_history = history
    return model


def logreg_predict_proba(model: LogRegModel, Q) -> np.ndarray:
    return model.predict_proba(Q)


# ---------------------------------------------------------------- Gaussian naive Bayes

@dataclass(eq=False)
class GaussianNbModel:
    priors: np.ndarray   # (2,)
    means: np.ndarray    # (2, d)
    variances: np.ndarray  # (2, d)
    var_floor: float

    kind = "gnb"

    def joint_log_likelihood(self, Q) -> np.ndarray:
        Q = _queries(Q, self.means.shape[1])
        out = np.empty((Q.shape[0], 2))
        for c in range(2):
            var = self.variances[c]
            out[:, c] = (np.log(self.priors[c])
                         - 0.5 * np.sum(np.log(2 * np.pi * var))
                         - 0.5 * np.sum((Q - self.means[c]) ** 2 / var, axis=1))
        return out

    def predict_proba(self, Q) -> np.ndarray:
        jll = self.joint_log_likelihood(Q)
        jll -= jll.max(axis=1, keepdims=True)
        p = np.exp(jll)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, Q) -> np.ndarray:
        return np.argmax(self.joint_log_likelihood(Q), axis=1).astype(np.int64)

    def to_dict(self) -> dict:
        return {"priors": self.priors.tolist(), "means": self.means.tolist(),
                "variances": self.variances.tolist(), "var_floor": self.var_floor}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["priors"]), np.asarray(d["means"]).reshape(2, -1),
                   np.asarray(d["variances"]).reshape(2, -1), float(d["var_floor"]))


def gnb_fit(X, y, var_smoothing: float = 1e-9) -> GaussianNbModel:
    X, y = _as_xy(X, y)
    counts = np.bincount(y, minlength=2)
    if (counts == 0).any():
        raise ClassifierError("naive Bayes needs both classes in the training set")
    max_var = float(X.var(axis=0).max())
    floor = var_smoothing * max_var if max_var > 0 else var_smoothing
    means = np.stack([X[y == c].mean(axis=0) for c in (0, 1)])
    variances = np.maximum(np.stack([X[y == c].var(axis=0) for c in (0, 1)]), floor)
    return GaussianNbModel(counts / counts.sum(), means, variances, floor)


def gnb_predict_proba(model: GaussianNbModel, Q) -> np.ndarray:
    """Posterior matrix, column 0 = normal, column 1 = abnormal."""
    return model.predict_proba(Q)


# ---------------------------------------------------------------- SVM (SMO)

def kernel_matrix(A, B, kernel: str, gamma: float | None = None) -> np.ndarray:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    if kernel == "linear":
        return A @ B.T
    if kernel == "rbf":
        sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2 * A @ B.T
        return np.exp(-gamma * np.maximum(sq, 0.0))
    raise ClassifierError(f"unknown kernel {kernel!r}")


def default_gamma(X) -> float:
    var = float(np.mean(np.var(X, axis=0)))
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


@dataclass(eq=False)
class SvmModel:
    kernel: str
    C: float
    gamma: float | None
    support_vectors: np.ndarray
    dual_coef: np.ndarray   # alpha_i * y_i (y in +-1) for stored support vectors
    alphas: np.ndarray      # alpha_i for stored support vectors
    bias: float
    tol: float = 1e-3
    max_passes: int = 10
    sweeps: int = 0

    kind = "svm"

    def decision_function(self, Q) -> np.ndarray:
        Q = _queries(Q, self.support_vectors.shape[1])
        if self.dual_coef.size == 0:
            return np.full(Q.shape[0], self.bias)
        return kernel_matrix(Q, self.support_vectors, self.kernel, self.gamma) @ self.dual_coef + self.bias

    def predict(self, Q) -> np.ndarray:
        return (self.decision_function(Q) > 0).astype(np.int64)

    def to_dict(self) -> dict:
        return {"kernel": self.kernel, "C": self.C, "gamma": self.gamma,
                "support_vectors": self.support_vectors.tolist(), "dual_coef": self.dual_coef.tolist(),
                "alphas": self.alphas.tolist(), "bias": self.bias, "tol": self.tol,
                "max_passes": self.max_passes, "sweeps": self.sweeps}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        coef = np.asarray(d.pop("dual_coef"), dtype=np.float64)
        sv = np.asarray(d.pop("support_vectors"), dtype=np.float64).reshape(coef.size, -1)
        return cls(d.pop("kernel"), d.pop("C"), d.pop("gamma"), sv, coef,
                   np.asarray(d.pop("alphas"), dtype=np.float64), **d)


def svm_threshold(alpha, ys, K, C, free_eps: float = 1e-8) -> float:
    """Bias consistent with the KKT conditions for fixed multipliers.

    Averages ``y_i - g_i`` over free multipliers; with none free, takes the
    midpoint of the interval left open by the bound multipliers.
    """
    g = K @ (alpha * ys)
    free = (alpha > free_eps) & (alpha < C - free_eps)
    if free.any():
        return float(np.mean(ys[free] - g[free]))
    lower = ((ys > 0) & (alpha <= free_eps)) | ((ys < 0) & (alpha >= C - free_eps))
    upper = ~lower
    lo = np.max(ys[lower] - g[lower]) if lower.any() else -np.inf
    hi = np.min(ys[upper] - g[upper]) if upper.any() else np.inf
    if np.isfinite(lo) and np.isfinite(hi):
        return float((lo + hi) / 2)
    return float(lo if np.isfinite(lo) else hi)


def kkt_violation(alpha, ys, f, C) -> np.ndarray:
    """Per-sample amount by which the KKT conditions are broken (0 if satisfied)."""
    r = ys * f - 1.0
    low = np.where(alpha < C, np.maximum(-r, 0.0), 0.0)
    high = np.where(alpha > 0, np.maximum(r, 0.0), 0.0)
    return np.maximum(low, high)


def svm_fit(X, y, kernel: str = "rbf", C: float = 1.0, gamma: float | None = None, tol: float = 1e-3,
            max_passes: int = 10, max_sweeps: int = 5000, seed: int = 0) -> SvmModel:
    """Soft-margin dual solved by simplified SMO.

    Each sweep visits every multiplier that breaks the KKT conditions by
    more than ``tol`` and pairs it with a randomly drawn partner (another
    violator when one exists). If that pair makes no progress the partner
    with the largest error gap is tried, then every other index in turn
    from a random offset. The run stops after
    ``max_passes`` consecutive sweeps with no violation left.
    """
    X, y01 = _as_xy(X, y)
    if np.unique(y01).size < 2:
        raise ClassifierError("SVM training needs both classes")
    if C <= 0:
        raise ClassifierError(f"C must be positive, got {C}")
    if kernel == "rbf" and gamma is None:
        gamma = default_gamma(X)
    ys = np.where(y01 == 1, 1.0, -1.0)
    n = X.shape[0]
    K = kernel_matrix(X, X, kernel, gamma)
    rng = np.random.default_rng(seed)
    alpha = np.zeros(n)
    b = 0.0
    g = np.zeros(n)  # sum_j alpha_j y_j K_ij
    step_eps = 1e-10
    bound_eps = 1e-10 * C

    def snap(a):
        # keep multipliers exactly on the box edges; float residue there reads as a KKT violation
        if a < bound_eps:
            return 0.0
        if a > C - bound_eps:
            return C
        return a

    def take_step(i, j) -> bool:
        nonlocal b
        if i == j:
            return False
        Ei, Ej = g[i] + b - ys[i], g[j] + b - ys[j]
        ai, aj = alpha[i], alpha[j]
        if ys[i] != ys[j]:
            L, H = max(0.0, aj - ai), min(C, C + aj - ai)
        else:
            L, H = max(0.0, ai + aj - C), min(C, ai + aj)
        if H - L < step_eps:
            return False
        eta = 2 * K[i, j] - K[i, i] - K[j, j]
        if eta >= 0:
            return False
        aj_new = min(H, max(L, aj - ys[j] * (Ei - Ej) / eta))
        if abs(aj_new - aj) < step_eps * (aj_new + aj + step_eps):
            return False
        ai_new = ai + ys[i] * ys[j] * (aj - aj_new)
        ai_new, aj_new = snap(ai_new), snap(aj_new)
        b1 = b - Ei - ys[i] * (ai_new - ai) * K[i, i] - ys[j] * (aj_new - aj) * K[i, j]
        b2 = b - Ej - ys[i] * (ai_new - ai) * K[i, j] - ys[j] * (aj_new - aj) * K[j, j]
        if 0 < ai_new < C:
            b = b1
        elif 0 < aj_new < C:
            b = b2
        else:
            b = (b1 + b2) / 2
        g[:] += ys[i] * (ai_new - ai) * K[:, i] + ys[j] * (aj_new - aj) * K[:, j]
        alpha[i], alpha[j] = ai_new, aj_new
        return True

    clean = 0
    sweeps = 0
    residual = np.inf
    while clean < max_passes:
        if sweeps >= max_sweeps:
            raise ConvergenceError(
                f"SMO did not converge in {max_sweeps} sweeps; residual KKT violation {residual:.3g}"
            )
        sweeps += 1
        for i in range(n):
            viol = kkt_violation(alpha, ys, g + b, C)
            if viol[i] <= tol:
                continue
            others = np.flatnonzero(viol > tol)
            others = others[others != i]
            pool = others if others.size else np.delete(np.arange(n), i)
            j = int(pool[rng.integers(pool.size)])
            if take_step(i, j):
                continue
            E = g + b - ys
            if take_step(i, int(np.argmax(np.abs(E - E[i])))):
                continue
            start = int(rng.integers(n))
            for j in np.roll(np.arange(n), -start):
                if take_step(i, int(j)):
                    break
        b = svm_threshold(alpha, ys, K, C)
        residual = float(kkt_violation(alpha, ys, g + b, C).max())
        clean = clean + 1 if residual <= tol else 0
    log.debug("SMO converged after %d sweeps (residual %.2e)", sweeps, residual)

    sv = alpha > 0
    return SvmModel(kernel, float(C), gamma, X[sv].copy(), (alpha * ys)[sv], alpha[sv], float(b),
                    tol, max_passes, sweeps)


def svm_predict(model: SvmModel, Q) -> np.ndarray:
    return model.predict(Q)


# ---------------------------------------------------------------- registry

CLASSICAL_KINDS = ("knn", "logreg", "gnb", "svm")


def fit_classical(kind: str, X, y, params: dict | None = None, seed: int = 0):
    params = dict(params or {})
    if kind == "knn":
        return knn_fit(X, y, **params)
    if kind == "logreg":
        return logreg_fit(X, y, **params)
    if kind == "gnb":
        return gnb_fit(X, y, **params)
    if kind == "svm":
        return svm_fit(X, y, seed=seed, **params)
    raise ClassifierError(f"unknown classifier {kind!r}")


_LOADERS = {"knn": KnnModel, "logreg": LogRegModel, "gnb": GaussianNbModel, "svm": SvmModel}


def load_classical(kind: str, d: dict):
    try:
        return _LOADERS[kind].from_dict(d)
    except KeyError:
        raise ClassifierError(f"unknown classifier {kind!r}") from None
