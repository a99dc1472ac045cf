import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.sparse.linalg import lsqr
from sklearn.linear_model import LogisticRegression
from sklearn.pipeline import make_pipeline
from sklearn.utils.estimator_checks import check_estimator  # noqa: F401  (import smoke)

from embcomp import (EmbeddingTable, LogisticProbe, RidgeProbe, Standardizer, TaskTable, evaluate,
                     logistic_fit, make_folds, ridge_fit, ridge_predict, score_accuracy, score_r2)
from embcomp._validation import ValidationError


def lsqr_ridge(X, Y, lam):
    # independent formulation: least squares on the augmented system [X; sqrt(lam) I]
    D = X.shape[1]
    A = np.vstack([X, np.sqrt(lam) * np.eye(D)])
    cols = []
    for j in range(Y.shape[1]):
        b = np.concatenate([Y[:, j], np.zeros(D)])
        cols.append(lsqr(A, b, atol=1e-15, btol=1e-15, iter_lim=20000)[0])
    return np.column_stack(cols)


def ref_logistic_objective(theta, X, y, C, lam):
    D = X.shape[1]
    W = theta[: D * C].reshape(D, C)
    b = theta[D * C :]
    z = X @ W + b
    m = z.max(axis=1, keepdims=True)
    logp = z - m - np.log(np.exp(z - m).sum(axis=1, keepdims=True))
    f = -logp[np.arange(len(y)), y].sum() + 0.5 * lam * np.sum(W**2)
    P = np.exp(logp)
    P[np.arange(len(y)), y] -= 1
    g = np.concatenate([(X.T @ P + lam * W).ravel(), P.sum(axis=0)])
    return f, g


class TestRidge:
    def test_against_lsqr(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            X = rng.standard_normal((60, 8))
            Y = rng.standard_normal((60, 2))
            W = ridge_fit(X, Y, 1.0).weights
            assert np.max(np.abs(W - lsqr_ridge(X, Y, 1.0))) < 1e-6

    def test_shapes_and_errors(self):
        X = np.ones((5, 3))
        assert ridge_fit(X, np.ones(5)).weights.shape == (3, 1)
        with pytest.raises(ValidationError):
            ridge_fit(X, np.ones(4))
        with pytest.raises(ValidationError):
            ridge_fit(X, np.ones(5), lam=0)
        with pytest.raises(ValidationError):
            ridge_predict(ridge_fit(X, np.ones(5)), np.ones((2, 2)))

    def test_estimator_api(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((100, 5))
        y = X @ rng.standard_normal(5)
        pipe = make_pipeline(Standardizer(), RidgeProbe(lam=1.0)).fit(X, y)
        assert pipe.predict(X).shape == (100,)
        assert pipe.score(X, y) > 99
        assert RidgeProbe(lam=3.0).get_params() == {"lam": 3.0}


class TestLogistic:
    def test_objective_vs_bfgs(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            X = rng.standard_normal((80, 4))
            y = rng.integers(0, 3, 80)
            m = logistic_fit(X, y, lam=1.0)
            assert m.converged
            th = np.r_[m.weights.ravel(), m.bias]
            ref = minimize(ref_logistic_objective, np.zeros(15), args=(X, y, 3, 1.0), jac=True,
                           method="BFGS", options={"gtol": 1e-10, "maxiter": 10000})
            ours = ref_logistic_objective(th, X, y, 3, 1.0)[0]
            assert abs(ours - ref.fun) <= 1e-4 * abs(ref.fun)
            assert np.all(np.diff(m.objective_history) <= 1e-9 * abs(m.objective_history[0]))

    def test_against_sklearn(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((200, 5))
        y = np.argmax(X @ rng.standard_normal((5, 4)) + rng.gumbel(size=(200, 4)), axis=1)
        m = logistic_fit(X, y, lam=2.0)
        sk = LogisticRegression(C=0.5, tol=1e-10, max_iter=10000).fit(X, y)
        np.testing.assert_array_equal(m.predict(X), sk.predict(X))
        np.testing.assert_allclose(m.predict_proba(X), sk.predict_proba(X), atol=1e-5)

    def test_probe_api(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((90, 3))
        y = (X[:, 0] > 0).astype(int) + (X[:, 1] > 1).astype(int)
        probe = LogisticProbe(lam=1.0).fit(X, y)
        assert probe.predict(X).shape == (90,)
        assert 0 <= probe.score(X, y) <= 100
        np.testing.assert_allclose(probe.predict_proba(X).sum(axis=1), 1.0)

    def test_errors(self):
        with pytest.raises(ValidationError):
            logistic_fit(np.ones((3, 2)), [0, 0, 0])
        with pytest.raises(ValidationError):
            logistic_fit(np.ones((3, 2)), [0, 1])


class TestScores:
    def test_r2(self):
        y = np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
        assert score_r2(y, y) == pytest.approx(100.0)
        # constant second column is excluded
        assert score_r2(y, np.c_[[2.0, 2.0, 2.0], [0.0, 0.0, 0.0]]) == pytest.approx(0.0)
        assert score_r2(y[:, :1], -y[:, :1] + 4) < 0
        with pytest.raises(ValidationError):
            score_r2(y[:, 1:], y[:, 1:])

    def test_accuracy(self):
        assert score_accuracy([0, 1, 2, 1], [0, 1, 1, 1]) == 75.0


def _tables(n=200, seed=0):
    rng = np.random.default_rng(seed)
    ids = tuple(f"p{i:03d}" for i in range(n))
    X = rng.standard_normal((n, 6))
    Y = X[:, :2] @ rng.standard_normal((2, 2)) + 0.1 * rng.standard_normal((n, 2))
    labels = (X[:, 0] > 0).astype(int) + 2 * (X[:, 1] > 0).astype(int)
    emb = EmbeddingTable("m", X, ids)
    reg = TaskTable("reg", "regression", Y, ("a", "b"), ids)
    cls = TaskTable("cls", "multiclass", labels[:, None], ("label",), ids)
    return emb, reg, cls


class TestEvaluate:
    def test_regression(self):
        emb, reg, _ = _tables()
        folds = make_folds(len(reg), 10, 0)
        rep = evaluate(emb, reg, folds)
        assert rep.metric == "r2" and rep.k == 10
        assert rep.mean > 95
        assert np.all(np.isfinite(rep.per_location_error))
        assert rep.per_location_error.shape == (200,)

    def test_classification_and_threads(self):
        emb, _, cls = _tables()
        folds = make_folds(len(cls), 5, 1)
        a = evaluate(emb, cls, folds)
        b = evaluate(emb, cls, folds, n_jobs=4)
        np.testing.assert_array_equal(a.fold_scores, b.fold_scores)
        assert a.per_location_error is None and a.mean > 70

    def test_modes(self):
        emb, reg, _ = _tables()
        folds = make_folds(len(reg), 4, 2)
        g = evaluate(emb, reg, folds, zscore="global", r2_baseline="train")
        assert abs(g.mean - evaluate(emb, reg, folds).mean) < 2
        with pytest.raises(ValidationError):
            evaluate(emb, reg, folds, zscore="bogus")
        with pytest.raises(ValidationError):
            evaluate(emb, reg, make_folds(100, 4, 0))

    def test_report_round_trip(self):
        emb, reg, _ = _tables()
        rep = evaluate(emb, reg, make_folds(len(reg), 5, 0))
        d = rep.to_dict()
        back = type(rep).from_dict(d)
        np.testing.assert_array_equal(back.fold_scores, rep.fold_scores)
        assert d["mean"] == pytest.approx(np.mean(d["fold_scores"]))
