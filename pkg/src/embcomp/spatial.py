"""Spatial scale of a target variable from the entropy of pairwise differences.

For every pair of locations closer than ``max_dist`` the squared difference
of their values is binned against their great-circle distance, each pair
weighted by the larger of its two values. The Shannon entropy of the
difference distribution in each distance bin rises with distance and is
fitted with

    H(x) = H_max - (H_max - H0) * exp(-x / d)

whose decay length ``d`` (km) is the spatial scale of the variable.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from embcomp._validation import NumericalError, ValidationError, as_matrix, as_vector
from embcomp.dataset import LocationTable
from embcomp.stats import spearman

EARTH_RADIUS_KM = 6371.0088
DEFAULT_MAX_DIST_KM = 1000.0
DEFAULT_BINS = 100
#: distance bins holding less than this fraction of the total weight are masked
MIN_BIN_WEIGHT_FRACTION = 1e-9
D_GRID_KM = (1.0, 5000.0)
D_GRID_POINTS = 200
MIN_VALID_BINS = 4

_BLOCK = 256


def haversine_km(lon1, lat1, lon2, lat2):
    """Great-circle distance in km between points given in degrees (broadcasts)."""
    lam1, phi1, lam2, phi2 = (np.radians(np.asarray(v, dtype=np.float64))
                              for v in (lon1, lat1, lon2, lat2))
    a = (np.sin((phi2 - phi1) / 2.0) ** 2
         + np.cos(phi1) * np.cos(phi2) * np.sin((lam2 - lam1) / 2.0) ** 2)
    d = 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))
    return d if d.ndim else float(d)


def _coords(locations):
    if isinstance(locations, LocationTable):
        return np.asarray(locations.lon, dtype=np.float64), np.asarray(locations.lat, dtype=np.float64)
    xy = as_matrix(locations, "locations")
    if xy.shape[1] != 2:
        raise ValidationError("locations must be a LocationTable or an (N, 2) lon/lat array")
    lon, lat = xy[:, 0], xy[:, 1]
    if np.any(np.abs(lat) > 90) or np.any(np.abs(lon) > 360):
        raise ValidationError("coordinates out of range")
    return lon, lat


def _block_hist(s, e, lat_sorted, lam, phi, cphi, y, max_dist, bins, dlat_deg):
    # rows s..e-1 against every later row within the latitude band
    hi = int(np.searchsorted(lat_sorted, lat_sorted[e - 1] + dlat_deg, side="right"))
    if hi <= s + 1:
        return None
    pi, pj = phi[s:e, None], phi[None, s:hi]
    a = (np.sin((pj - pi) / 2.0) ** 2
         + cphi[s:e, None] * cphi[None, s:hi] * np.sin((lam[None, s:hi] - lam[s:e, None]) / 2.0) ** 2)
    dist = 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))
    rows = np.arange(s, e)[:, None]
    cols = np.arange(s, hi)[None, :]
    keep = (cols > rows) & (dist <= max_dist)
    if not keep.any():
        return None
    ii, jj = np.nonzero(keep)
    yi, yj = y[s + ii], y[s + jj]
    w = np.maximum(yi, yj)
    db = np.minimum((dist[ii, jj] * (bins / max_dist)).astype(np.intp), bins - 1)
    qb = np.minimum(((yi - yj) ** 2 * bins).astype(np.intp), bins - 1)
    return np.bincount(db * bins + qb, weights=w, minlength=bins * bins)


def weighted_pair_density(values, locations, max_dist=DEFAULT_MAX_DIST_KM, bins=DEFAULT_BINS,
                          n_jobs=None):
    """``bins x bins`` histogram of (distance, squared difference) over location pairs.

    Parameters
    ----------
    values : array-like of shape (N,)
        Per-location values in [0, 1], e.g. class probabilities.
    locations : LocationTable or array-like of shape (N, 2)
        Longitude and latitude in degrees.
    max_dist : float
        Pairs farther apart than this (km) are ignored. Distance bins are
        linear over ``[0, max_dist]``; difference bins over ``[0, 1]``.
    n_jobs : int, optional
        Worker threads. Blocks are merged in index order, so the result does
        not depend on scheduling.

    Returns
    -------
    ndarray of shape (bins, bins)
        Row = distance bin, column = squared-difference bin, entry = summed
        ``max(y1, y2)`` over unordered pairs (self-pairs excluded).
    """
    y = as_vector(values, "values", min_len=2)
    lon, lat = _coords(locations)
    if len(lon) != len(y):
        raise ValidationError(f"{len(y)} values for {len(lon)} locations")
    if np.any(y < 0) or np.any(y > 1):
        raise ValidationError("values must lie in [0, 1]")
    if not max_dist > 0:
        raise ValidationError("max_dist must be positive")
    bins = int(bins)
    if bins < 1:
        raise ValidationError("bins must be >= 1")

    order = np.argsort(lat, kind="stable")
    lat_s, lon_s, y_s = lat[order], lon[order], y[order]
    lam, phi = np.radians(lon_s), np.radians(lat_s)
    cphi = np.cos(phi)
    # a latitude gap alone larger than max_dist rules the pair out
    dlat_deg = math.degrees(max_dist / EARTH_RADIUS_KM) * (1 + 1e-12)
    n = len(y)
    starts = range(0, n, _BLOCK)
    args = [(s, min(s + _BLOCK, n), lat_s, lam, phi, cphi, y_s, float(max_dist), bins, dlat_deg)
            for s in starts]

    total = np.zeros(bins * bins)
    if n_jobs is not None and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            parts = list(ex.map(lambda a: _block_hist(*a), args))
    else:
        parts = (_block_hist(*a) for a in args)
    for h in parts:
        if h is not None:
            total += h
    return total.reshape(bins, bins)


@dataclass(frozen=True)
class EntropyCurve:
    distance_bin_centers: np.ndarray
    entropy: np.ndarray
    valid_mask: np.ndarray


def entropy_curve(density, max_dist=DEFAULT_MAX_DIST_KM):
    """Per-distance-bin Shannon entropy (nats) of the difference distribution."""
    H = as_matrix(density, "density")
    if np.any(H < 0):
        raise ValidationError("density weights must be non-negative")
    grand = H.sum()
    if grand <= 0:
        raise ValidationError("all-zero density histogram")
    row = H.sum(axis=1)
    valid = row >= MIN_BIN_WEIGHT_FRACTION * grand
    p = H / np.where(row > 0, row, 1.0)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = -np.where(p > 0, p * np.log(p), 0.0).sum(axis=1)
    ent = np.maximum(ent, 0.0)
    ent[~valid] = 0.0
    centers = (np.arange(H.shape[0]) + 0.5) * (max_dist / H.shape[0])
    return EntropyCurve(centers, ent, valid)


@dataclass(frozen=True)
class SpatialScaleFit:
    h0: float
    h_max: float
    d: float
    rss: float
    degenerate: bool = False

    def predict(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.h_max - (self.h_max - self.h0) * np.exp(-x / self.d)


def _linear_fit(d, x, h):
    """Best (h0, h_max, rss) for fixed ``d`` subject to ``h_max >= h0``."""
    phi = np.exp(-x / d)
    A = np.column_stack([phi, 1.0 - phi])
    coef, *_ = np.linalg.lstsq(A, h, rcond=None)
    h0, hmax = coef
    if hmax < h0:
        # constraint active: the curve is flat
        h0 = hmax = float(h.mean())
    r = h - (hmax - (hmax - h0) * phi)
    return float(h0), float(hmax), float(r @ r)


def _golden(f, a, b, tol=1e-10, max_iter=200):
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def fit_spatial_scale(curve):
    """Least-squares exponential-saturation fit over the valid bins.

    ``d`` is searched on a 200-point logarithmic grid over [1, 5000] km with
    ``(H0, H_max)`` solved in closed form at each grid point, then refined
    by golden-section search in ``log d`` between the neighbours of the best
    grid point. A flat curve is flagged as degenerate.
    """
    x = np.asarray(curve.distance_bin_centers, dtype=np.float64)[curve.valid_mask]
    h = np.asarray(curve.entropy, dtype=np.float64)[curve.valid_mask]
    if x.size < MIN_VALID_BINS:
        raise ValidationError(f"need at least {MIN_VALID_BINS} valid distance bins, got {x.size}")
    grid = np.geomspace(*D_GRID_KM, D_GRID_POINTS)
    rss = np.array([_linear_fit(d, x, h)[2] for d in grid])
    k = int(np.argmin(rss))
    lo, hi = np.log(grid[max(k - 1, 0)]), np.log(grid[min(k + 1, len(grid) - 1)])
    log_d, best = _golden(lambda t: _linear_fit(math.exp(t), x, h)[2], lo, hi)
    if best > rss[k]:
        log_d = math.log(grid[k])
    d = math.exp(log_d)
    h0, hmax, r = _linear_fit(d, x, h)
    if not all(map(math.isfinite, (h0, hmax, r))):
        raise NumericalError("spatial-scale fit produced non-finite values")
    degenerate = abs(hmax - h0) <= 1e-9 * max(1.0, abs(hmax))
    return SpatialScaleFit(h0, hmax, d, r, bool(degenerate))


class SpatialScale(BaseEstimator):
    """Estimate the spatial scale of a [0, 1]-valued field.

    Parameters
    ----------
    max_dist : float, default 1000
    bins : int, default 100
    n_jobs : int, optional

    Attributes
    ----------
    density_ : ndarray of shape (bins, bins)
    curve_ : EntropyCurve
    fit_ : SpatialScaleFit
    d_ : float
        Fitted decay length in km.
    """

    def __init__(self, max_dist=DEFAULT_MAX_DIST_KM, bins=DEFAULT_BINS, n_jobs=None):
        self.max_dist = max_dist
        self.bins = bins
        self.n_jobs = n_jobs

    def fit(self, X, y):
        """``X`` is a LocationTable or (N, 2) lon/lat array, ``y`` the values."""
        self.density_ = weighted_pair_density(y, X, self.max_dist, self.bins, self.n_jobs)
        self.curve_ = entropy_curve(self.density_, self.max_dist)
        self.fit_ = fit_spatial_scale(self.curve_)
        self.d_ = self.fit_.d
        return self

    def predict(self, x_km):
        """Fitted entropy at distances ``x_km``."""
        return self.fit_.predict(x_km)


def class_spatial_scales(task, locations, max_dist=DEFAULT_MAX_DIST_KM, bins=DEFAULT_BINS,
                         n_jobs=None):
    """Fit one scale per column of a probability-valued task.

    Returns ``{class_name: (EntropyCurve, SpatialScaleFit)}`` in column order.
    Columns without any weight (all zeros) get a flat degenerate fit.
    """
    targets = np.asarray(task.targets, dtype=np.float64)
    if targets.ndim != 2:
        raise ValidationError("spatial scales need a multivariate probability-valued task")
    out = {}
    for j, name in enumerate(task.target_names):
        dens = weighted_pair_density(targets[:, j], locations, max_dist, bins, n_jobs)
        if dens.sum() <= 0:
            centers = (np.arange(bins) + 0.5) * (max_dist / bins)
            curve = EntropyCurve(centers, np.zeros(bins), np.zeros(bins, dtype=bool))
            out[name] = (curve, SpatialScaleFit(0.0, 0.0, D_GRID_KM[0], 0.0, True))
            continue
        curve = entropy_curve(dens, max_dist)
        out[name] = (curve, fit_spatial_scale(curve))
    return out


def scale_score_correlation(d_values, scores, exact=False):
    """Spearman correlation between per-class scales and per-class scores."""
    d = as_vector(d_values, "d_values", min_len=4)
    s = as_vector(scores, "scores", min_len=4)
    if len(d) != len(s):
        raise ValidationError("d_values and scores must have equal length")
    return spearman(d, s, exact=exact)


def write_entropy_curves(path, curves):
    """``curves`` maps class name to EntropyCurve."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "bin_center_km", "entropy", "valid"])
        for name, c in curves.items():
            for x, h, v in zip(c.distance_bin_centers, c.entropy, c.valid_mask):
                w.writerow([name, repr(float(x)), repr(float(h)), int(bool(v))])


def write_scale_fits(path, fits):
    """``fits`` maps class name to SpatialScaleFit."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "h0", "h_max", "d_km", "rss", "degenerate"])
        for name, f in fits.items():
            w.writerow([name, repr(f.h0), repr(f.h_max), repr(f.d), repr(f.rss), int(f.degenerate)])
