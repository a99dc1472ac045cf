import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from embcomp import (GreedyStratifiedSampler, LocationTable, PopulationDataset, SamplerConfig,
                     class_mass, greedy_stratified_sample, sample_sphere_uniform, sweep_sampler,
                     uniformity)
from embcomp._validation import ValidationError

from _fields import imbalanced_population


class TestSphere:
    def test_min_lat(self):
        locs = sample_sphere_uniform(2000, min_lat=-56, seed=1)
        assert len(locs) == 2000 and locs.lat.min() >= -56
        with pytest.raises(ValidationError):
            sample_sphere_uniform(10, min_lat=90)

    def test_deterministic(self):
        a, b = sample_sphere_uniform(50, seed=3), sample_sphere_uniform(50, seed=3)
        np.testing.assert_array_equal(a.lon, b.lon)

    def test_equal_area_bands(self):
        locs = sample_sphere_uniform(50_000, min_lat=-90, seed=2)
        edges = np.degrees(np.arcsin(np.linspace(-1, 1, 21)))
        counts, _ = np.histogram(locs.lat, bins=edges)
        assert sps.chisquare(counts).pvalue > 0.01

    def test_latitude_cdf(self):
        m = -56.0
        locs = sample_sphere_uniform(20_000, min_lat=m, seed=4)
        s = np.sin(np.radians(m))
        cdf = lambda lat: (np.sin(np.radians(lat)) - s) / (1 - s)  # noqa: E731
        assert sps.kstest(locs.lat, cdf).pvalue > 0.01
        lon_p = sps.kstest(locs.lon, sps.uniform(-180, 360).cdf).pvalue
        assert lon_p > 0.01


class TestMetrics:
    def test_class_mass(self):
        assert class_mass([[0.2, 0.8]]).tolist() == [0.2, 0.8]
        np.testing.assert_allclose(class_mass([[1, 0], [0, 1]]), [0.5, 0.5])
        with pytest.raises(ValidationError):
            class_mass(np.zeros((0, 2)))

    def test_uniformity(self):
        u = uniformity(np.full((4, 5), 0.2))
        assert u.c_eff == pytest.approx(1.0) and u.entropy == pytest.approx(np.log(5))
        assert uniformity([[1.0, 0.0], [1.0, 0.0]]).c_eff == 0.0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 1000), st.integers(2, 6))
    def test_bounds(self, seed, C):
        P = np.random.default_rng(seed).dirichlet(np.ones(C), size=20)
        u = uniformity(P)
        assert 0 <= u.c_eff <= 1 + 1e-12
        assert u.entropy <= np.log(C) + 1e-12
        assert u.class_mass.sum() == pytest.approx(1.0, abs=1e-9)


class TestGreedy:
    def test_exact_n_unique(self):
        pop = imbalanced_population(3000)
        for n, step in [(300, 5), (301, 7), (17, 50)]:
            idx = greedy_stratified_sample(pop, SamplerConfig(n, step, 0.15, 0))
            assert len(idx) == n == len(set(idx.tolist()))

    def test_initial_seed_is_highest_entropy(self):
        pop = imbalanced_population(1000)
        idx = greedy_stratified_sample(pop, SamplerConfig(100, 5, 0.2, 0))
        P = pop.probs
        ent = -(np.where(P > 0, P * np.log(np.where(P > 0, P, 1)), 0)).sum(1)
        top = set(np.argsort(-ent, kind="stable")[:20].tolist())
        assert set(idx[:20].tolist()) == top

    def test_beats_random(self):
        pop = imbalanced_population(3000, seed=1)
        rng = np.random.default_rng(0)
        rand = [uniformity(pop.probs[rng.choice(3000, 300, replace=False)]).c_eff for _ in range(20)]
        greedy = uniformity(pop.probs[greedy_stratified_sample(pop, SamplerConfig(300))]).c_eff
        assert greedy > np.median(rand)

    def test_uniform_population(self):
        P = np.full((200, 4), 0.25)
        pop = PopulationDataset(LocationTable(tuple(map(str, range(200))), np.zeros(200),
                                              np.zeros(200)), P)
        idx = greedy_stratified_sample(pop, SamplerConfig(50))
        assert uniformity(P[idx]).c_eff == pytest.approx(1.0)

    def test_zero_initial_ratio(self):
        pop = imbalanced_population(500)
        assert len(greedy_stratified_sample(pop, SamplerConfig(40, 5, 0.0, 3))) == 40

    def test_errors(self):
        pop = imbalanced_population(50)
        with pytest.raises(ValidationError):
            greedy_stratified_sample(pop, SamplerConfig(51))
        with pytest.raises(ValidationError):
            SamplerConfig(10, step_size=0)
        with pytest.raises(ValidationError):
            SamplerConfig(10, initial_ratio=1.0)
        with pytest.raises(ValidationError):
            PopulationDataset(pop.locations, np.full((50, 3), 0.5))

    def test_deterministic_per_seed(self):
        pop = imbalanced_population(2000, seed=4)
        cfg = SamplerConfig(200, 5, 0.15, 11)
        np.testing.assert_array_equal(greedy_stratified_sample(pop, cfg),
                                      greedy_stratified_sample(pop, cfg))

    def test_estimator(self):
        pop = imbalanced_population(800)
        est = GreedyStratifiedSampler(n=80, seed=1).fit(pop)
        assert est.get_params()["step_size"] == 5 and est.get_params()["initial_ratio"] == 0.15
        assert est.transform(pop).shape == (80, 3)
        assert GreedyStratifiedSampler(n=80, seed=1).fit(pop.probs).indices_.shape == (80,)

    def test_statistical_monotone_intent(self):
        wins = 0
        for seed in range(20):
            pop = imbalanced_population(2000, seed=100 + seed)
            rng = np.random.default_rng(seed)
            base = uniformity(pop.probs[rng.choice(2000, 200, replace=False)]).c_eff
            greedy = uniformity(pop.probs[greedy_stratified_sample(pop, SamplerConfig(200, seed=seed))]).c_eff
            wins += greedy >= base
        assert wins >= 16


class TestSweep:
    def test_single_cell_equals_direct(self):
        pop = imbalanced_population(1500)
        res = sweep_sampler(pop, 150, [5], [0.15], seed=7)
        direct = uniformity(pop.probs[greedy_stratified_sample(pop, SamplerConfig(150, 5, 0.15, 7))])
        assert res.c_eff.shape == (1, 1) and res.c_eff[0, 0] == direct.c_eff

    def test_grid(self):
        pop = imbalanced_population(1500)
        res = sweep_sampler(pop, 150, [1, 5, 20], [0.0, 0.15, 0.3], seed=1)
        assert res.c_eff.shape == (3, 3)
        i = res.step_sizes.index(5)
        j = res.initial_ratios.index(0.15)
        assert res.c_eff.max() >= res.c_eff[i, j]
        again = sweep_sampler(pop, 150, [1, 5, 20], [0.0, 0.15, 0.3], seed=1, n_jobs=3)
        np.testing.assert_array_equal(again.c_eff, res.c_eff)
        assert again.best == res.best
        with pytest.raises(ValidationError):
            sweep_sampler(pop, 150, [], [0.1])
