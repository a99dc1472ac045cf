"""Task-agnostic similarity between two embedding tables."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from embcomp._validation import NumericalError, ValidationError, as_matrix, check_same_rows
from embcomp.dataset import _check_aligned

DEFAULT_CCA_EPSILON = 1e-8


@dataclass(frozen=True)
class SimilarityReport:
    model_a: str
    model_b: str
    cca_mean: float
    cka: float


def _centered(X, name):
    X = as_matrix(X, name, min_rows=2)
    return X - X.mean(axis=0)


def _inv_sqrt(S):
    vals, vecs = np.linalg.eigh(S)
    if vals.min() <= 0:
        raise NumericalError("covariance is not positive definite; increase epsilon")
    return (vecs / np.sqrt(vals)) @ vecs.T


def canonical_correlations(X, Y, epsilon=DEFAULT_CCA_EPSILON):
    """All ``min(D1, D2)`` canonical correlations, descending, clipped to [0, 1].

    Covariances use divisor ``N``; ``epsilon`` is added to both diagonals.
    """
    Xc, Yc = _centered(X, "X"), _centered(Y, "Y")
    n = check_same_rows(Xc, Yc, names=("X", "Y"))
    sxx = Xc.T @ Xc / n
    syy = Yc.T @ Yc / n
    sxy = Xc.T @ Yc / n
    sxx[np.diag_indices_from(sxx)] += epsilon
    syy[np.diag_indices_from(syy)] += epsilon
    T = _inv_sqrt(sxx) @ sxy @ _inv_sqrt(syy)
    rho = np.linalg.svd(T, compute_uv=False)
    k = min(Xc.shape[1], Yc.shape[1])
    return np.clip(rho[:k], 0.0, 1.0)


def cca_mean_correlation(X, Y, epsilon=DEFAULT_CCA_EPSILON):
    """Mean of the top ``min(D1, D2)`` canonical correlations."""
    return float(np.mean(canonical_correlations(X, Y, epsilon)))


def linear_cka(X, Y):
    """Linear centred kernel alignment, computed in feature space."""
    Xc, Yc = _centered(X, "X"), _centered(Y, "Y")
    check_same_rows(Xc, Yc, names=("X", "Y"))
    # fixed operand order so that swapping X and Y is bit-for-bit symmetric
    if (Xc.shape[1], Xc.tobytes()) > (Yc.shape[1], Yc.tobytes()):
        Xc, Yc = Yc, Xc
    nx = np.linalg.norm(Xc.T @ Xc)
    ny = np.linalg.norm(Yc.T @ Yc)
    if nx == 0 or ny == 0:
        raise ValidationError("linear CKA undefined for a constant input matrix")
    return float(np.linalg.norm(Yc.T @ Xc) ** 2 / (nx * ny))


def pairwise_similarity(embeddings, epsilon=DEFAULT_CCA_EPSILON):
    """One :class:`SimilarityReport` per unordered pair of list positions."""
    embeddings = list(embeddings)
    if len(embeddings) < 2:
        raise ValidationError("pairwise similarity needs at least 2 embeddings")
    _check_aligned(embeddings)
    reports = []
    for a, b in itertools.combinations(embeddings, 2):
        reports.append(
            SimilarityReport(
                a.model_name,
                b.model_name,
                cca_mean_correlation(a.matrix, b.matrix, epsilon),
                linear_cka(a.matrix, b.matrix),
            )
        )
    return reports


def write_similarity_table(path, reports):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model_a", "model_b", "cca_mean", "cka"])
        for r in reports:
            w.writerow([r.model_a, r.model_b, repr(r.cca_mean), repr(r.cka)])
