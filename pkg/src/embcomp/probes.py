"""Linear probes (ridge, multinomial logistic) and fold-wise evaluation."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from embcomp._validation import (
    NumericalError,
    ValidationError,
    as_matrix,
    check_positive,
    check_same_rows,
)
from embcomp.dataset import EmbeddingTable, FoldPlan, Standardizer, TaskTable, _check_aligned
from embcomp.stats import sem as _sem

#: The logistic penalty ``(lam / 2) * ||W||^2`` is added to the *summed*
#: negative log-likelihood (not the mean), i.e. ``lam = 1`` is sklearn's ``C = 1``.
NLL_REDUCTION = "sum"

ZSCORE_MODES = ("fold", "global")
R2_BASELINES = ("test", "train")


# ------------------------------------------------------------------ ridge


@dataclass(frozen=True)
class RidgeModel:
    weights: np.ndarray  # D x T
    lam: float


def ridge_fit(X, Y, lam=1.0):
    """Solve ``(X'X + lam I) W = X'Y`` by Cholesky; no intercept."""
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y", allow_1d=True)
    check_same_rows(X, Y, names=("X", "Y"))
    lam = check_positive(lam, "lam")
    gram = X.T @ X
    gram[np.diag_indices_from(gram)] += lam
    try:
        W = linalg.cho_solve(linalg.cho_factor(gram, lower=False), X.T @ Y)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"ridge system not positive definite: {exc}") from exc
    if not np.all(np.isfinite(W)):
        raise NumericalError("ridge solve produced non-finite weights")
    return RidgeModel(W, lam)


def ridge_predict(model, X):
    X = as_matrix(X, "X")
    if X.shape[1] != model.weights.shape[0]:
        raise ValidationError(
            f"X has {X.shape[1]} columns, model expects {model.weights.shape[0]}"
        )
    return X @ model.weights


class RidgeProbe(RegressorMixin, BaseEstimator):
    """L2-penalised linear regression without intercept.

    Inputs and targets are expected to be standardised already, e.g. by a
    preceding :class:`~embcomp.dataset.Standardizer` in a pipeline.
    """

    def __init__(self, lam=1.0):
        self.lam = lam

    def fit(self, X, y):
        y_arr = np.asarray(y)
        self._1d = y_arr.ndim == 1
        self.model_ = ridge_fit(X, y_arr, self.lam)
        self.coef_ = self.model_.weights
        self.n_features_in_ = self.coef_.shape[0]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        pred = ridge_predict(self.model_, X)
        return pred[:, 0] if self._1d else pred

    def score(self, X, y, sample_weight=None):
        """Mean R^2 over target columns, in percent."""
        return score_r2(np.asarray(y), self.predict(X))


# --------------------------------------------------------------- logistic


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray  # D x C
    bias: np.ndarray  # C
    lam: float
    converged: bool
    iterations: int
    objective_history: tuple = field(default=(), repr=False)

    def decision_function(self, X):
        X = as_matrix(X, "X")
        if X.shape[1] != self.weights.shape[0]:
            raise ValidationError(
                f"X has {X.shape[1]} columns, model expects {self.weights.shape[0]}"
            )
        return X @ self.weights + self.bias

    def predict_proba(self, X):
        z = self.decision_function(X)
        return np.exp(z - logsumexp(z, axis=1, keepdims=True))

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)


def logistic_objective(theta, X, onehot, lam):
    """Summed multinomial NLL plus ``(lam/2)||W||^2`` and its gradient."""
    D, C = X.shape[1], onehot.shape[1]
    W = theta[: D * C].reshape(D, C)
    b = theta[D * C :]
    z = X @ W + b
    zmax = z.max(axis=1)
    lse = zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1))
    f = float(lse.sum() - (z * onehot).sum() + 0.5 * lam * (W * W).sum())
    resid = np.exp(z - lse[:, None]) - onehot
    gW = X.T @ resid + lam * W
    gb = resid.sum(axis=0)
    return f, np.concatenate([gW.ravel(), gb])


def _lbfgs_direction(g, s_hist, y_hist):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
        bcoef = rho * (y @ q)
        q += (a - bcoef) * s
    return -q


def logistic_fit(X, labels, lam=1.0, n_classes=None, max_iter=1000, tol=1e-6, memory=10):
    """Multinomial logistic regression by L-BFGS with a monotone line search.

    Minimises the summed negative log-likelihood plus ``(lam/2)||W||^2``;
    the bias is not penalised. Starts from all-zero parameters and stops when
    the max-norm of the gradient falls below ``tol`` or after ``max_iter``
    iterations.
    """
    X = as_matrix(X, "X")
    y = np.asarray(labels)
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ValidationError("labels must be 1-D with one entry per row of X")
    if not np.all(np.isfinite(y.astype(np.float64))) or np.any(y != np.round(y)):
        raise ValidationError("labels must be finite integers")
    y = y.astype(np.int64)
    lam = check_positive(lam, "lam")
    C = int(n_classes) if n_classes is not None else int(y.max()) + 1
    if C < 2:
        raise ValidationError("logistic regression needs at least 2 classes")
    if y.min() < 0 or y.max() >= C:
        raise ValidationError(f"labels must lie in [0, {C})")
    N, D = X.shape
    onehot = np.zeros((N, C))
    onehot[np.arange(N), y] = 1.0

    theta = np.zeros(D * C + C)
    f, g = logistic_objective(theta, X, onehot, lam)
    history = [f]
    s_hist, y_hist = [], []
    converged = bool(np.max(np.abs(g)) < tol)
    it = 0
    while not converged and it < max_iter:
        p = _lbfgs_direction(g, s_hist, y_hist)
        slope = g @ p
        if slope >= 0:
            s_hist.clear()
            y_hist.clear()
            p = -g
            slope = -(g @ g)
        step = 1.0 if s_hist else 1.0 / max(1.0, np.max(np.abs(g)))
        accepted = False
        gnorm = np.max(np.abs(g))
        # near the optimum f stops resolving progress; fall back on the gradient
        ftol = 8.0 * np.finfo(float).eps * max(1.0, abs(f))
        for _ in range(60):
            cand = theta + step * p
            f_new, g_new = logistic_objective(cand, X, onehot, lam)
            armijo = f_new <= f + 1e-4 * step * slope and f_new < f
            if armijo or (f_new <= f + ftol and np.max(np.abs(g_new)) < gnorm):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if s_hist:
                s_hist.clear()
                y_hist.clear()
                continue
            break
        s, yv = cand - theta, g_new - g
        if s @ yv > 1e-12 * np.sqrt((s @ s) * (yv @ yv)):
            s_hist.append(s)
            y_hist.append(yv)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
        theta, f, g = cand, f_new, g_new
        history.append(f)
        it += 1
        converged = bool(np.max(np.abs(g)) < tol)
    if not np.all(np.isfinite(theta)):
        raise NumericalError("logistic fit diverged")
    return LogisticModel(
        theta[: D * C].reshape(D, C).copy(),
        theta[D * C :].copy(),
        lam,
        converged,
        it,
        tuple(history),
    )


class LogisticProbe(ClassifierMixin, BaseEstimator):
    """Multinomial logistic regression with an unpenalised bias."""

    def __init__(self, lam=1.0, n_classes=None, max_iter=1000, tol=1e-6):
        self.lam = lam
        self.n_classes = n_classes
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        self.model_ = logistic_fit(
            X, y, self.lam, n_classes=self.n_classes, max_iter=self.max_iter, tol=self.tol
        )
        self.coef_ = self.model_.weights
        self.intercept_ = self.model_.bias
        self.classes_ = np.arange(self.coef_.shape[1])
        self.n_iter_ = self.model_.iterations
        self.converged_ = self.model_.converged
        self.n_features_in_ = self.coef_.shape[0]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict_proba(X)

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict(X)

    def score(self, X, y, sample_weight=None):
        """Accuracy in percent."""
        return score_accuracy(y, self.predict(X))


# ---------------------------------------------------------------- scoring


def score_r2(Y_true, Y_pred, baseline=None):
    """Mean coefficient of determination over target columns, in percent.

    ``baseline`` is the per-column reference mean; by default the mean of
    ``Y_true`` itself. Columns whose reference sum of squares is zero are
    left out of the average.
    """
    Y_true = as_matrix(Y_true, "Y_true", allow_1d=True, min_rows=2)
    Y_pred = as_matrix(Y_pred, "Y_pred", allow_1d=True)
    if Y_true.shape != Y_pred.shape:
        raise ValidationError(f"shape mismatch {Y_true.shape} vs {Y_pred.shape}")
    ref = Y_true.mean(axis=0) if baseline is None else np.broadcast_to(
        np.asarray(baseline, dtype=np.float64), (Y_true.shape[1],)
    )
    ss_res = ((Y_true - Y_pred) ** 2).sum(axis=0)
    ss_tot = ((Y_true - ref) ** 2).sum(axis=0)
    ok = ss_tot > 0
    if not np.any(ok):
        raise ValidationError("every target column has zero variance in this split")
    return float(100.0 * np.mean(1.0 - ss_res[ok] / ss_tot[ok]))


def score_accuracy(labels_true, labels_pred):
    a = np.asarray(labels_true).ravel()
    b = np.asarray(labels_pred).ravel()
    if a.shape != b.shape:
        raise ValidationError(f"length mismatch {a.shape[0]} vs {b.shape[0]}")
    if a.size == 0:
        raise ValidationError("accuracy needs at least one label")
    return float(100.0 * np.mean(a == b))


# ------------------------------------------------------------- evaluation


@dataclass(frozen=True)
class EvaluationReport:
    embedding_name: str
    task_name: str
    metric: str  # "r2" or "accuracy", both in percent
    fold_scores: np.ndarray
    location_ids: tuple
    per_location_error: np.ndarray | None = None

    @property
    def mean(self):
        return float(np.mean(self.fold_scores))

    @property
    def sem(self):
        return _sem(self.fold_scores)

    @property
    def k(self):
        return len(self.fold_scores)

    def to_dict(self):
        d = {
            "embedding_name": self.embedding_name,
            "task_name": self.task_name,
            "metric": self.metric,
            "fold_scores": [float(s) for s in self.fold_scores],
            "mean": self.mean,
            "sem": self.sem,
        }
        return d

    @classmethod
    def from_dict(cls, d, location_ids=(), per_location_error=None):
        return cls(
            d["embedding_name"],
            d["task_name"],
            d["metric"],
            np.asarray(d["fold_scores"], dtype=np.float64),
            tuple(location_ids),
            None if per_location_error is None else np.asarray(per_location_error, dtype=float),
        )


def _fold_regression(X, Y, train, test, lam, zscore, r2_baseline):
    if zscore == "fold":
        sx = Standardizer().fit(X[train])
        sy = Standardizer().fit(Y[train])
        Xs, Ys = sx.transform(X), sy.transform(Y)
    else:
        Xs, Ys = X, Y
    model = ridge_fit(Xs[train], Ys[train], lam)
    pred = ridge_predict(model, Xs[test])
    baseline = Ys[train].mean(axis=0) if r2_baseline == "train" else None
    score = score_r2(Ys[test], pred, baseline=baseline)
    mse = ((Ys[test] - pred) ** 2).mean(axis=1)
    return score, mse


def _fold_classification(X, labels, n_classes, train, test, lam, zscore, max_iter, tol):
    Xs = Standardizer().fit(X[train]).transform(X) if zscore == "fold" else X
    model = logistic_fit(Xs[train], labels[train], lam, n_classes=n_classes,
                         max_iter=max_iter, tol=tol)
    return score_accuracy(labels[test], model.predict(Xs[test])), None


def evaluate(
    embedding: EmbeddingTable,
    task: TaskTable,
    folds: FoldPlan,
    lam=1.0,
    *,
    zscore="fold",
    r2_baseline="test",
    n_jobs=None,
    max_iter=1000,
    tol=1e-6,
):
    """Score a linear probe of ``task`` on ``embedding`` over every fold.

    With ``zscore="fold"`` the standardiser is fitted on each fold's training
    rows; ``"global"`` z-scores once over all rows. Regression reports carry
    each location's test MSE in standardised target space.
    """
    if zscore not in ZSCORE_MODES:
        raise ValidationError(f"zscore must be one of {ZSCORE_MODES}")
    if r2_baseline not in R2_BASELINES:
        raise ValidationError(f"r2_baseline must be one of {R2_BASELINES}")
    _check_aligned([embedding, task])
    if folds.n != len(task):
        raise ValidationError(f"fold plan covers {folds.n} rows, tables have {len(task)}")
    lam = check_positive(lam, "lam")
    X = embedding.matrix
    regression = task.kind == "regression"
    if regression:
        Y = task.targets
        if zscore == "global":
            X = Standardizer().fit_transform(X)
            Y = Standardizer().fit_transform(Y)

        def run(split):
            return _fold_regression(X, Y, split[0], split[1], lam, zscore, r2_baseline)
    else:
        labels = task.labels
        if zscore == "global":
            X = Standardizer().fit_transform(X)

        def run(split):
            return _fold_classification(X, labels, task.n_classes, split[0], split[1],
                                        lam, zscore, max_iter, tol)

    splits = list(folds.splits())
    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, splits))
    else:
        results = [run(s) for s in splits]

    scores = np.array([r[0] for r in results])
    per_loc = None
    if regression:
        per_loc = np.full(len(task), np.nan)
        for (_, test), (_, mse) in zip(splits, results):
            per_loc[test] = mse
    return EvaluationReport(
        embedding.model_name,
        task.task_name,
        "r2" if regression else "accuracy",
        scores,
        task.location_ids,
        per_loc,
    )
