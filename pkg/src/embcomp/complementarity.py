"""Complementarity index of a fused embedding relative to its constituents.

For a fused score ``S_f``, constituent scores ``S_i`` and best attainable
score ``S_best``::

    C = (S_f - best(S_i)) / (S_best - best(S_i))

``best`` is ``max`` for a maximised metric and ``min`` for a minimised one,
so ``0 < C <= 1`` means the fusion beats every constituent in both cases.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from embcomp._validation import ValidationError
from embcomp.dataset import LocationTable
from embcomp.stats import benjamini_hochberg, stars, wilcoxon_one_sided

DIRECTIONS = ("maximize", "minimize")
#: Percent-valued scores (R^2 [%], accuracy [%]) are perfect at 100, not 1.
PERCENT_BEST = 100.0
EXPORT_CLIP_MIN = -1.0


def complementarity_index(fused_score, single_scores, best_possible=PERCENT_BEST,
                          direction="maximize"):
    """Normalised gain of ``fused_score`` over the best of ``single_scores``.

    Returns 0 when the best single score already equals ``best_possible``.
    """
    if direction not in DIRECTIONS:
        raise ValidationError(f"direction must be one of {DIRECTIONS}")
    singles = np.asarray(single_scores, dtype=np.float64).ravel()
    if singles.size == 0:
        raise ValidationError("single_scores is empty")
    scores = np.append(singles, float(fused_score))
    if not np.all(np.isfinite(scores)) or not np.isfinite(best_possible):
        raise ValidationError("scores must be finite")
    if direction == "maximize":
        if np.any(scores > best_possible):
            raise ValidationError("a score exceeds best_possible")
        best = singles.max()
    else:
        if np.any(scores < best_possible):
            raise ValidationError("a score is below best_possible for a minimised metric")
        best = singles.min()
    headroom = best_possible - best
    if headroom == 0:
        return 0.0
    return float((fused_score - best) / headroom)


@dataclass(frozen=True)
class ComplementarityCell:
    combo_name: str
    task_name: str
    index: float
    fused_mean: float
    best_single_mean: float
    best_single_name: str
    p_value: float | None = None  # None when only means are available
    p_adjusted: float | None = None
    significance: str | None = None


def task_complementarity(fused, singles, best_possible=PERCENT_BEST):
    """Task-level cell from fold-score reports.

    The p-value is a one-sided Wilcoxon signed-rank test of the fused fold
    scores against those of the single model with the best mean.
    """
    singles = list(singles)
    if not singles:
        raise ValidationError("need at least one single-model report")
    for s in singles:
        if s.k != fused.k:
            raise ValidationError("fused and single reports have different fold counts")
        if s.task_name != fused.task_name:
            raise ValidationError("reports belong to different tasks")
    means = [s.mean for s in singles]
    best = singles[int(np.argmax(means))]
    index = complementarity_index(fused.mean, means, best_possible, "maximize")
    diff = np.asarray(fused.fold_scores) - np.asarray(best.fold_scores)
    if np.all(diff == 0):
        p = 1.0
    else:
        p = wilcoxon_one_sided(fused.fold_scores, best.fold_scores, "greater").p_value
    return ComplementarityCell(
        fused.embedding_name, fused.task_name, index, fused.mean, best.mean,
        best.embedding_name, p,
    )


def adjust_family(cells, fdr=0.05):
    """Fill ``p_adjusted`` and ``significance`` over one BH family."""
    cells = list(cells)
    if not cells:
        return []
    if any(c.p_value is None for c in cells):
        raise ValidationError("every cell needs a p-value for BH adjustment")
    adjusted, _ = benjamini_hochberg([c.p_value for c in cells], fdr)
    return [replace(c, p_adjusted=float(q), significance=stars(q)) for c, q in zip(cells, adjusted)]


def write_complementarity_table(path, cells):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["combo", "task", "index", "p_value", "p_adjusted", "stars"])
        for c in cells:
            w.writerow([
                c.combo_name, c.task_name, repr(c.index),
                "" if c.p_value is None else repr(c.p_value),
                "" if c.p_adjusted is None else repr(c.p_adjusted),
                c.significance or "",
            ])


# ------------------------------------------------------------ per location


@dataclass(frozen=True)
class LocationComplementarityMap:
    combo_name: str
    task_name: str
    locations: LocationTable
    c_values: np.ndarray  # unclipped

    def exported_values(self):
        return np.maximum(self.c_values, EXPORT_CLIP_MIN)

    def write_csv(self, path):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "lon", "lat", "c"])
            for i, lo, la, c in zip(self.locations.ids, self.locations.lon,
                                    self.locations.lat, self.exported_values()):
                w.writerow([i, repr(float(lo)), repr(float(la)), repr(float(c))])


def per_location_complementarity(fused, singles, locations):
    """Complementarity per location from test MSE (minimised, best 0)."""
    singles = list(singles)
    if not singles:
        raise ValidationError("need at least one single-model report")
    reports = [fused, *singles]
    if any(r.per_location_error is None for r in reports):
        raise ValidationError("per-location complementarity needs regression reports")
    ids = fused.location_ids
    if any(r.location_ids != ids for r in singles) or tuple(locations.ids) != tuple(ids):
        raise ValidationError("reports and locations are not aligned")
    f = np.asarray(fused.per_location_error, dtype=np.float64)
    best = np.min([np.asarray(s.per_location_error, dtype=np.float64) for s in singles], axis=0)
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(best))):
        raise ValidationError("per-location errors must be finite (every location tested once)")
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(best > 0, (best - f) / np.where(best > 0, best, 1.0), 0.0)
    return LocationComplementarityMap(fused.embedding_name, fused.task_name, locations, c)
