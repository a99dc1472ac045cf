import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from embcomp import benjamini_hochberg, sem, spearman, stars, t_test_one_sided, wilcoxon_one_sided
from embcomp._validation import NumericalError, ValidationError
from embcomp.stats import signed_rank_null_counts


def brute_wilcoxon_p(d, alternative="greater"):
    d = np.asarray(d, float)
    d = d[d != 0]
    ranks = sps.rankdata(np.abs(d))
    obs = ranks[d > 0].sum()
    n = len(d)
    hits = 0
    for signs in itertools.product([0, 1], repeat=n):
        s = ranks[np.array(signs, bool)].sum()
        hits += s >= obs - 1e-9 if alternative == "greater" else s <= obs + 1e-9
    return hits / 2**n


class TestWilcoxon:
    def test_all_positive_n20(self):
        r = wilcoxon_one_sided(np.arange(20) + 1.0, np.zeros(20))
        assert r.method == "wilcoxon_exact"
        assert r.p_value == pytest.approx(2.0**-20, rel=1e-12)

    def test_hand_case(self):
        d = [1, 2, 3, 4, 5, -6]
        # W+ = 15; a rank subset sums to >= 15 iff its complement sums to <= 6: 14 of 64
        r = wilcoxon_one_sided(d)
        assert r.statistic == 15
        assert r.p_value == pytest.approx(brute_wilcoxon_p(d))
        assert r.p_value == pytest.approx(14 / 64)

    def test_zero_differences(self):
        with pytest.raises(ValidationError):
            wilcoxon_one_sided([1.0, 2.0], [1.0, 2.0])

    def test_null_counts_total(self):
        for n in range(1, 15):
            c = signed_rank_null_counts(n)
            assert c.sum() == 2**n
            np.testing.assert_array_equal(c, c[::-1])

    def test_less(self):
        r = wilcoxon_one_sided(np.zeros(8), np.arange(1.0, 9.0), alternative="less")
        assert r.p_value == pytest.approx(2.0**-8)

    def test_matches_scipy_normal(self):
        rng = np.random.default_rng(0)
        d = np.round(rng.standard_normal(40), 1) + 0.2  # ties present
        ours = wilcoxon_one_sided(d)
        ref = sps.wilcoxon(d, alternative="greater", method="approx", correction=True)
        assert ours.method == "wilcoxon_normal"
        assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-9)

    def test_pratt(self):
        d = np.array([0.0, 1.0, 2.0, -0.5, 3.0, 4.0, 0.0, 5.0])
        ref = sps.wilcoxon(d, alternative="greater", zero_method="pratt", method="approx",
                           correction=True)
        assert wilcoxon_one_sided(d, zero_method="pratt").p_value == pytest.approx(ref.pvalue, rel=1e-9)

    def test_exact_normal_agreement(self):
        rng = np.random.default_rng(5)
        for n in range(10, 26):
            d = rng.standard_normal(n) + 0.3
            exact = wilcoxon_one_sided(d).p_value
            from embcomp import stats as S
            old = S.EXACT_WILCOXON_MAX_N
            try:
                S.EXACT_WILCOXON_MAX_N = 0
                z = wilcoxon_one_sided(d).p_value
            finally:
                S.EXACT_WILCOXON_MAX_N = old
            assert abs(exact - z) < 0.02, (n, exact, z)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(-30, 30).filter(lambda v: v != 0), min_size=1, max_size=10, unique_by=abs))
    def test_exact_vs_brute(self, d):
        d = np.array(d, float)
        assert wilcoxon_one_sided(d).p_value == pytest.approx(brute_wilcoxon_p(d), rel=1e-12)
        assert wilcoxon_one_sided(d, alternative="less").p_value == pytest.approx(
            brute_wilcoxon_p(d, "less"), rel=1e-12)

    def test_permutation_stable(self):
        rng = np.random.default_rng(7)
        a, b = rng.standard_normal(15), rng.standard_normal(15)
        p = rng.permutation(15)
        assert wilcoxon_one_sided(a, b) == wilcoxon_one_sided(a[p], b[p])


class TestTTest:
    def test_constant_shift(self):
        b = np.arange(6.0)
        with pytest.raises(NumericalError):
            t_test_one_sided(b + 1, b)

    def test_reference(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal(12) + 0.5
        b = rng.standard_normal(12)
        r = t_test_one_sided(a, b, paired=True)
        ref = sps.ttest_rel(a, b, alternative="greater")
        assert abs(r.p_value - ref.pvalue) < 1e-10
        r = t_test_one_sided(a, b[:9], paired=False, alternative="less")
        ref = sps.ttest_ind(a, b[:9], alternative="less", equal_var=True)
        assert abs(r.p_value - ref.pvalue) < 1e-10
        assert r.method == "t_independent"


class TestSpearman:
    def test_extremes(self):
        a = np.arange(6.0)
        assert spearman(a, a**3).statistic == pytest.approx(1.0)
        assert spearman(a, -a).statistic == pytest.approx(-1.0)

    def test_hand_rank_formula(self):
        r = spearman([1, 2, 3, 4], [1, 2, 4, 3])
        assert r.statistic == pytest.approx(1 - 6 * 2 / (4 * 15))
        assert r.statistic == pytest.approx(0.8)

    def test_reference(self):
        rng = np.random.default_rng(2)
        a, b = rng.standard_normal(9), rng.standard_normal(9)
        ref = sps.spearmanr(a, b)
        r = spearman(a, b)
        assert r.statistic == pytest.approx(ref.statistic)
        assert r.p_value == pytest.approx(ref.pvalue, rel=1e-9)

    def test_exact(self):
        r = spearman([1, 2, 3, 4, 5], [1, 2, 3, 5, 4], exact=True)
        ref = sps.spearmanr([1, 2, 3, 4, 5], [1, 2, 3, 5, 4]).statistic
        assert r.statistic == pytest.approx(ref)
        assert r.method == "spearman_exact"
        # |rho| >= 0.9 happens for 10 of 120 permutations
        assert r.p_value == pytest.approx(10 / 120)

    def test_constant(self):
        with pytest.raises(ValidationError):
            spearman([1, 1, 1, 1], [1, 2, 3, 4])

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(-1000, 1000), min_size=5, max_size=20, unique=True))
    def test_monotone_invariance(self, xs):
        a = np.array(xs, dtype=float)
        b = np.random.default_rng(len(xs)).standard_normal(len(xs))
        r1 = spearman(a, b).statistic
        r2 = spearman(a**3 - 5.0, b).statistic
        assert r1 == pytest.approx(r2, abs=1e-12)


class TestBH:
    def test_hand(self):
        adj, rej = benjamini_hochberg([0.01, 0.02, 0.03, 0.04])
        np.testing.assert_allclose(adj, [0.04] * 4)
        assert rej.all()
        adj, rej = benjamini_hochberg([0.3])
        assert adj[0] == 0.3
        adj, rej = benjamini_hochberg([1.0, 1.0])
        assert not rej.any()

    def test_errors(self):
        for bad in ([], [0.0], [1.5], [np.nan]):
            with pytest.raises(ValidationError):
                benjamini_hochberg(bad)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(1e-8, 1.0), min_size=1, max_size=40))
    def test_properties(self, ps):
        p = np.array(ps)
        adj, _ = benjamini_hochberg(p)
        assert np.all(adj >= p - 1e-15)
        order = np.argsort(p, kind="stable")
        assert np.all(np.diff(adj[order]) >= -1e-15)
        assert np.all(adj <= 1.0)


def test_stars():
    assert stars(0.0009) == "***"
    assert stars(0.001) == "**"
    assert stars(0.009) == "**"
    assert stars(0.01) == "*"
    assert stars(0.02) == "*"
    assert stars(0.05) == "none"
    assert stars(0.5) == "none"


def test_sem():
    assert sem([1, 1, 1]) == 0.0
    assert sem([0, 2]) == 1.0
    v = np.random.default_rng(0).standard_normal(20)
    assert abs(sem(v) - sps.sem(v)) < 1e-12
    with pytest.raises(ValidationError):
        sem([1.0])
