"""Hypothesis tests and summary statistics."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from embcomp._validation import NumericalError, ValidationError, as_vector

#: Largest effective sample size for which the exact signed-rank null is used.
EXACT_WILCOXON_MAX_N = 25

METHODS = ("wilcoxon_exact", "wilcoxon_normal", "t_paired", "t_independent", "spearman_t",
           "spearman_exact")


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str
    n_effective: int

    __test__ = False  # keep pytest from collecting this class


def _clip_p(p):
    return float(min(1.0, max(p, np.finfo(float).tiny)))


def _alternative(alternative):
    if alternative not in ("greater", "less"):
        raise ValidationError(f"alternative must be 'greater' or 'less', got {alternative!r}")
    return alternative


def signed_rank_null_counts(n):
    """Number of sign patterns of ranks 1..n giving each positive-rank sum.

    Entry ``s`` of the returned array counts subsets of ``{1..n}`` with sum
    ``s``; the array sums to ``2**n``.
    """
    counts = np.zeros(n * (n + 1) // 2 + 1, dtype=np.float64)
    counts[0] = 1.0
    top = 0
    for r in range(1, n + 1):
        counts[r : top + r + 1] += counts[: top + 1].copy()
        top += r
    return counts


def wilcoxon_one_sided(a, b=None, alternative="greater", zero_method="wilcox"):
    """One-sided Wilcoxon signed-rank test on ``a - b``.

    ``zero_method="wilcox"`` drops zero differences before ranking;
    ``"pratt"`` ranks them and then discards their ranks. The exact null is
    used for at most :data:`EXACT_WILCOXON_MAX_N` untied non-zero
    differences, otherwise a normal approximation with tie and continuity
    corrections.
    """
    alternative = _alternative(alternative)
    a = as_vector(a, "a")
    if b is None:
        d = a
    else:
        b = as_vector(b, "b")
        if len(a) != len(b):
            raise ValidationError("a and b must have equal length")
        d = a - b
    if zero_method not in ("wilcox", "pratt"):
        raise ValidationError(f"unknown zero_method {zero_method!r}")
    nonzero = d != 0
    n_eff = int(nonzero.sum())
    if n_eff == 0:
        raise ValidationError("all differences are zero")

    if zero_method == "wilcox":
        d = d[nonzero]
        ranks = sps.rankdata(np.abs(d))
        keep = np.ones(len(d), dtype=bool)
    else:
        ranks = sps.rankdata(np.abs(d))
        keep = nonzero
    w_plus = float(ranks[keep & (d > 0)].sum())

    r_eff = ranks[keep]
    tied = len(np.unique(r_eff)) < len(r_eff) or (zero_method == "pratt" and n_eff < len(d))
    if n_eff <= EXACT_WILCOXON_MAX_N and not tied:
        counts = signed_rank_null_counts(n_eff)
        total = 2.0**n_eff
        s = int(round(w_plus))
        if alternative == "greater":
            p = counts[s:].sum() / total
        else:
            p = counts[: s + 1].sum() / total
        return TestResult(w_plus, _clip_p(p), "wilcoxon_exact", n_eff)

    mean = r_eff.sum() / 2.0
    var = float((r_eff**2).sum()) / 4.0
    if var <= 0:
        raise NumericalError("zero variance of signed-rank statistic")
    if alternative == "greater":
        z = (w_plus - mean - 0.5) / math.sqrt(var)
        p = sps.norm.sf(z)
    else:
        z = (w_plus - mean + 0.5) / math.sqrt(var)
        p = sps.norm.cdf(z)
    return TestResult(w_plus, _clip_p(p), "wilcoxon_normal", n_eff)


def t_test_one_sided(a, b, paired=True, alternative="greater"):
    """One-sided Student t-test of ``mean(a) > mean(b)`` (or ``<``).

    The independent variant pools the two sample variances.
    """
    alternative = _alternative(alternative)
    a = as_vector(a, "a", min_len=2)
    b = as_vector(b, "b", min_len=2)
    if paired:
        if len(a) != len(b):
            raise ValidationError("paired t-test needs equal lengths")
        d = a - b
        sd = d.std(ddof=1)
        if sd == 0:
            raise NumericalError("differences have zero variance")
        t = d.mean() / (sd / math.sqrt(len(d)))
        df = len(d) - 1
        method, n_eff = "t_paired", len(d)
    else:
        na, nb = len(a), len(b)
        pooled = ((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / (na + nb - 2)
        if pooled == 0:
            raise NumericalError("both samples have zero variance")
        t = (a.mean() - b.mean()) / math.sqrt(pooled * (1.0 / na + 1.0 / nb))
        df = na + nb - 2
        method, n_eff = "t_independent", na + nb
    p = sps.t.sf(t, df) if alternative == "greater" else sps.t.cdf(t, df)
    return TestResult(float(t), _clip_p(p), method, n_eff)


def _pearson(x, y):
    xc, yc = x - x.mean(), y - y.mean()
    den = math.sqrt(float(xc @ xc) * float(yc @ yc))
    return float(xc @ yc) / den


def spearman(a, b, exact=False):
    """Spearman rank correlation with a two-sided p-value.

    The default p-value uses the t approximation with ``n - 2`` degrees of
    freedom; ``exact=True`` enumerates all rank permutations (``n <= 10``).
    """
    a = as_vector(a, "a", min_len=4)
    b = as_vector(b, "b", min_len=4)
    if len(a) != len(b):
        raise ValidationError("a and b must have equal length")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise ValidationError("spearman is undefined for a constant vector")
    ra, rb = sps.rankdata(a), sps.rankdata(b)
    rho = float(np.clip(_pearson(ra, rb), -1.0, 1.0))
    n = len(a)
    if exact:
        if n > 10:
            raise ValidationError("exact spearman p-value limited to n <= 10")
        observed = abs(rho) - 1e-12
        hits = total = 0
        for perm in itertools.permutations(rb):
            total += 1
            hits += abs(_pearson(ra, np.asarray(perm))) >= observed
        return TestResult(rho, _clip_p(hits / total), "spearman_exact", n)
    df = n - 2
    if abs(rho) >= 1.0:
        p = 0.0
    else:
        t = rho * math.sqrt(df / (1.0 - rho * rho))
        p = 2.0 * sps.t.sf(abs(t), df)
    return TestResult(rho, _clip_p(p), "spearman_t", n)


def benjamini_hochberg(p_values, fdr=0.05):
    """Benjamini-Hochberg step-up adjustment.

    Returns ``(adjusted, rejected)`` arrays in input order.
    """
    p = np.asarray(p_values, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValidationError("benjamini_hochberg needs a non-empty 1-D list of p-values")
    if np.any(~np.isfinite(p)) or np.any(p <= 0) or np.any(p > 1):
        raise ValidationError("p-values must lie in (0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    adjusted_sorted = np.minimum.accumulate(scaled[::-1])[::-1]
    adjusted = np.empty(m)
    adjusted[order] = np.minimum(adjusted_sorted, 1.0)
    return adjusted, adjusted <= fdr


def stars(p_adjusted):
    """Significance marker: ``***`` < 0.001, ``**`` < 0.01, ``*`` < 0.05."""
    p = float(p_adjusted)
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return "none"


def sem(values):
    """Standard error of the mean (sample sd, divisor ``n - 1``, over sqrt n)."""
    v = as_vector(values, "values")
    if v.size < 2:
        raise ValidationError("sem needs at least 2 values")
    return float(v.std(ddof=1) / math.sqrt(v.size))

