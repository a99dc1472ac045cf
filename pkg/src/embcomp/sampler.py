"""Uniform sphere sampling and a greedy class-balancing location sampler."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from embcomp._validation import ValidationError, as_matrix
from embcomp.dataset import LocationTable

DEFAULT_MIN_LAT = -56.0
DEFAULT_STEP_SIZE = 5
DEFAULT_INITIAL_RATIO = 0.15
ROW_SUM_TOL = 1e-6


def sample_sphere_uniform(n, min_lat=DEFAULT_MIN_LAT, seed=0):
    """``n`` points uniform on the sphere restricted to ``lat >= min_lat``.

    Longitude is uniform and ``sin(lat)`` is uniform on [-1, 1]; draws below
    ``min_lat`` are rejected until ``n`` are accepted. Ids are ``"s<index>"``.
    """
    n = int(n)
    if n < 1:
        raise ValidationError("n must be >= 1")
    if not min_lat < 90:
        raise ValidationError("min_lat must be below 90")
    rng = np.random.default_rng(seed)
    lon_parts, lat_parts, have = [], [], 0
    while have < n:
        m = max(2 * (n - have), 16)
        lon = rng.uniform(-180.0, 180.0, m)
        lat = np.degrees(np.arcsin(rng.uniform(-1.0, 1.0, m)))
        keep = lat >= min_lat
        lon_parts.append(lon[keep])
        lat_parts.append(lat[keep])
        have += int(keep.sum())
    lon = np.concatenate(lon_parts)[:n]
    lat = np.concatenate(lat_parts)[:n]
    width = len(str(n - 1))
    ids = tuple(f"s{i:0{width}d}" for i in range(n))
    return LocationTable(ids, lon, lat)


@dataclass(frozen=True)
class PopulationDataset:
    """Candidate locations with a class-probability row per location."""

    locations: LocationTable
    probs: np.ndarray
    class_names: tuple = ()

    def __post_init__(self):
        probs = _check_probs(self.probs)
        if probs.shape[0] != len(self.locations):
            raise ValidationError(f"{probs.shape[0]} probability rows for {len(self.locations)} locations")
        names = tuple(self.class_names) or tuple(f"c{j}" for j in range(probs.shape[1]))
        if len(names) != probs.shape[1]:
            raise ValidationError("class_names length does not match probability columns")
        probs = probs.copy()
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "class_names", names)

    def __len__(self):
        return self.probs.shape[0]

    @classmethod
    def from_task(cls, locations, task):
        """Build from an aligned probability-valued regression task."""
        if tuple(task.location_ids) != tuple(locations.ids):
            raise ValidationError("task and locations are not aligned")
        return cls(locations, task.targets, task.target_names)


def _check_probs(probs):
    P = as_matrix(probs, "probs")
    if P.shape[1] < 2:
        raise ValidationError("need at least 2 classes")
    if np.any(P < 0) or np.any(P > 1):
        raise ValidationError("class probabilities must lie in [0, 1]")
    if np.any(np.abs(P.sum(axis=1) - 1.0) > ROW_SUM_TOL):
        raise ValidationError("each probability row must sum to 1")
    return P


@dataclass(frozen=True)
class SamplerConfig:
    n: int
    step_size: int = DEFAULT_STEP_SIZE
    initial_ratio: float = DEFAULT_INITIAL_RATIO
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError("n must be a positive integer")
        if int(self.step_size) != self.step_size or self.step_size < 1:
            raise ValidationError("step_size must be an integer >= 1")
        if not 0.0 <= self.initial_ratio < 1.0:
            raise ValidationError("initial_ratio must lie in [0, 1)")
        if math.floor(self.initial_ratio * self.n) >= self.n:
            raise ValidationError("initial seed would fill the whole sample")

    @property
    def n_initial(self):
        return int(math.floor(self.initial_ratio * self.n))


@dataclass(frozen=True)
class UniformityMetrics:
    c_eff: float
    entropy: float
    class_mass: np.ndarray


def class_mass(probs):
    """Average class distribution ``p(c) = mean_l p_l(c)``."""
    P = as_matrix(probs, "probs")
    return P.mean(axis=0)


def _row_entropy(P):
    with np.errstate(divide="ignore", invalid="ignore"):
        return -np.where(P > 0, P * np.log(P), 0.0).sum(axis=1)


def uniformity(probs):
    """Sampling efficiency ``min p(c) / mean p(c)`` and entropy (nats) of ``p(c)``."""
    p = class_mass(probs)
    mean = p.mean()
    c_eff = float(p.min() / mean) if mean > 0 else 0.0
    ent = float(_row_entropy(p[None, :])[0])
    return UniformityMetrics(c_eff, ent, p)


def _id_rank(ids):
    # ascending-id position of each row, for deterministic tie-breaks
    order = sorted(range(len(ids)), key=lambda i: ids[i])
    rank = np.empty(len(ids), dtype=np.int64)
    rank[order] = np.arange(len(ids))
    return rank


def greedy_stratified_sample(pop, config):
    """Indices (into ``pop``) of a class-balanced sample of exactly ``config.n`` rows.

    The sample is seeded with the ``floor(initial_ratio * n)`` rows of highest
    entropy. Each further step draws a class with probability proportional
    to how far its mass in the current sample falls below the mean class
    mass, then adds the ``step_size`` unused rows with the highest
    probability for that class. Ties break by ascending location id. The
    last block is cut to reach ``n`` exactly, keeping its highest-ranked rows.
    """
    P = pop.probs
    N, C = P.shape
    n = int(config.n)
    if N < n:
        raise ValidationError(f"population of {N} rows is smaller than n = {n}")
    rank = _id_rank(pop.locations.ids)
    rng = np.random.default_rng(config.seed)

    used = np.zeros(N, dtype=bool)
    chosen = []
    k0 = config.n_initial
    if k0:
        seed_rows = np.lexsort((rank, -_row_entropy(P)))[:k0]
        used[seed_rows] = True
        chosen.extend(int(i) for i in seed_rows)
    mass_sum = P[chosen].sum(axis=0) if chosen else np.zeros(C)

    # per-class candidate order, consumed lazily past rows already taken
    orders = [None] * C
    cursor = np.zeros(C, dtype=np.int64)
    step = int(config.step_size)
    while len(chosen) < n:
        mass = mass_sum / max(len(chosen), 1)
        w = np.maximum(mass.mean() - mass, 0.0) if chosen else np.zeros(C)
        total = w.sum()
        c = int(rng.choice(C, p=w / total)) if total > 0 else int(rng.integers(C))
        if orders[c] is None:
            orders[c] = np.lexsort((rank, -P[:, c]))
        take = min(step, n - len(chosen))
        block = []
        order, pos = orders[c], int(cursor[c])
        while len(block) < take and pos < N:
            i = int(order[pos])
            pos += 1
            if not used[i]:
                block.append(i)
        cursor[c] = pos
        if len(block) < take:
            raise ValidationError("population exhausted before reaching n")
        used[block] = True
        chosen.extend(block)
        mass_sum += P[block].sum(axis=0)
    return np.asarray(chosen, dtype=np.intp)


class GreedyStratifiedSampler(BaseEstimator):
    """Estimator wrapper around :func:`greedy_stratified_sample`.

    Parameters
    ----------
    n : int
    step_size : int, default 5
    initial_ratio : float, default 0.15
    seed : int, default 0

    Attributes
    ----------
    indices_ : ndarray of int
    metrics_ : UniformityMetrics
    """

    def __init__(self, n=1000, step_size=DEFAULT_STEP_SIZE, initial_ratio=DEFAULT_INITIAL_RATIO,
                 seed=0):
        self.n = n
        self.step_size = step_size
        self.initial_ratio = initial_ratio
        self.seed = seed

    def fit(self, X, y=None):
        """``X`` is a PopulationDataset or an (N, C) probability matrix."""
        pop = _as_population(X)
        cfg = SamplerConfig(self.n, self.step_size, self.initial_ratio, self.seed)
        self.indices_ = greedy_stratified_sample(pop, cfg)
        self.metrics_ = uniformity(pop.probs[self.indices_])
        return self

    def transform(self, X):
        pop = _as_population(X)
        return pop.probs[self.indices_]

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)


def _as_population(X):
    if isinstance(X, PopulationDataset):
        return X
    P = _check_probs(X)
    ids = tuple(str(i) for i in range(P.shape[0]))
    return PopulationDataset(LocationTable(ids, np.zeros(len(ids)), np.zeros(len(ids))), P)


@dataclass(frozen=True)
class SweepResult:
    step_sizes: tuple
    initial_ratios: tuple
    c_eff: np.ndarray  # shape (len(step_sizes), len(initial_ratios))
    metrics: tuple  # nested tuples of UniformityMetrics, same layout

    @property
    def best(self):
        """``(step_size, initial_ratio)`` of the first maximal cell in row-major order."""
        i, j = np.unravel_index(int(np.argmax(self.c_eff)), self.c_eff.shape)
        return self.step_sizes[i], self.initial_ratios[j]


def sweep_sampler(pop, n, step_sizes, initial_ratios, seed=0, n_jobs=None):
    """Run the greedy sampler over a hyperparameter grid.

    Every cell uses the same ``seed`` so a 1x1 grid equals a direct call.
    """
    steps = tuple(int(s) for s in step_sizes)
    ratios = tuple(float(r) for r in initial_ratios)
    if not steps or not ratios:
        raise ValidationError("sweep grids must be non-empty")
    cells = [(s, r) for s in steps for r in ratios]

    def run(cell):
        cfg = SamplerConfig(n, cell[0], cell[1], seed)
        return uniformity(pop.probs[greedy_stratified_sample(pop, cfg)])

    if n_jobs is not None and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            flat = list(ex.map(run, cells))
    else:
        flat = [run(c) for c in cells]
    grid = tuple(tuple(flat[i * len(ratios):(i + 1) * len(ratios)]) for i in range(len(steps)))
    c_eff = np.array([[m.c_eff for m in row] for row in grid])
    return SweepResult(steps, ratios, c_eff, grid)
