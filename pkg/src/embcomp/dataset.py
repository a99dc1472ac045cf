"""Per-location tables: loading, alignment, standardisation, fusion and folds.

File formats (comma separated, UTF-8, one header row):

* locations: ``id,lon,lat``
* embedding: ``id,e0,...,e{D-1}``
* regression targets: ``id,<name0>,...``
* classification targets: ``id,label`` with integer labels
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from embcomp._validation import ValidationError, as_matrix

TASK_KINDS = ("multiclass", "regression")
_REJECTED_TOKENS = {"", "nan", "+nan", "-nan"}


def _readonly(arr):
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


def _check_ids(ids, what):
    ids = tuple(str(i) for i in ids)
    if not ids:
        raise ValidationError(f"{what}: no rows")
    if any(i == "" for i in ids):
        raise ValidationError(f"{what}: missing id")
    if len(set(ids)) != len(ids):
        seen, dup = set(), None
        for i in ids:
            if i in seen:
                dup = i
                break
            seen.add(i)
        raise ValidationError(f"{what}: duplicate id {dup!r}")
    return ids


@dataclass(frozen=True)
class LocationTable:
    ids: tuple
    lon: np.ndarray
    lat: np.ndarray

    def __post_init__(self):
        ids = _check_ids(self.ids, "locations")
        lon = np.asarray(self.lon, dtype=np.float64)
        lat = np.asarray(self.lat, dtype=np.float64)
        if lon.shape != (len(ids),) or lat.shape != (len(ids),):
            raise ValidationError("locations: ids, lon and lat must have equal length")
        if not (np.all(np.isfinite(lon)) and np.all(np.isfinite(lat))):
            raise ValidationError("locations: non-finite coordinate")
        if np.any(np.abs(lon) > 180):
            raise ValidationError("locations: longitude outside [-180, 180]")
        if np.any(np.abs(lat) > 90):
            raise ValidationError("locations: latitude outside [-90, 90]")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "lon", _readonly(lon))
        object.__setattr__(self, "lat", _readonly(lat))

    def __len__(self):
        return len(self.ids)

    @property
    def location_ids(self):
        return self.ids

    def take(self, index):
        index = np.asarray(index, dtype=np.intp)
        return LocationTable(tuple(self.ids[i] for i in index), self.lon[index], self.lat[index])


@dataclass(frozen=True)
class EmbeddingTable:
    model_name: str
    matrix: np.ndarray
    location_ids: tuple

    def __post_init__(self):
        ids = _check_ids(self.location_ids, f"embedding {self.model_name}")
        try:
            matrix = as_matrix(self.matrix, name=f"embedding {self.model_name}")
        except ValidationError as exc:
            raise ValidationError(f"embedding {self.model_name}: {exc}") from None
        if matrix.shape[0] != len(ids):
            raise ValidationError(
                f"embedding {self.model_name}: {matrix.shape[0]} rows for {len(ids)} ids"
            )
        object.__setattr__(self, "location_ids", ids)
        object.__setattr__(self, "matrix", _readonly(matrix))

    def __len__(self):
        return len(self.location_ids)

    @property
    def dim(self):
        return self.matrix.shape[1]

    def take(self, index):
        index = np.asarray(index, dtype=np.intp)
        return EmbeddingTable(
            self.model_name, self.matrix[index], tuple(self.location_ids[i] for i in index)
        )


@dataclass(frozen=True)
class TaskTable:
    task_name: str
    kind: str
    targets: np.ndarray
    target_names: tuple
    location_ids: tuple
    n_classes: int | None = field(default=None)

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValidationError(f"task {self.task_name}: kind must be one of {TASK_KINDS}")
        ids = _check_ids(self.location_ids, f"task {self.task_name}")
        targets = as_matrix(self.targets, name=f"task {self.task_name}", allow_1d=True)
        names = tuple(str(n) for n in self.target_names)
        if targets.shape[0] != len(ids):
            raise ValidationError(f"task {self.task_name}: {targets.shape[0]} rows for {len(ids)} ids")
        if len(names) != targets.shape[1]:
            raise ValidationError(f"task {self.task_name}: {len(names)} names for {targets.shape[1]} columns")
        n_classes = None
        if self.kind == "multiclass":
            if targets.shape[1] != 1:
                raise ValidationError(f"task {self.task_name}: multiclass needs exactly one label column")
            labels = targets[:, 0]
            if np.any(labels != np.round(labels)):
                raise ValidationError(f"task {self.task_name}: labels must be integers")
            present = np.unique(labels.astype(np.int64))
            n_classes = self.n_classes if self.n_classes is not None else int(present.max()) + 1
            if n_classes < 2:
                raise ValidationError(f"task {self.task_name}: need at least 2 classes")
            if present.min() < 0 or present.max() >= n_classes:
                raise ValidationError(f"task {self.task_name}: labels must lie in [0, {n_classes})")
            if self.n_classes is None and len(present) != n_classes:
                raise ValidationError(
                    f"task {self.task_name}: class set must be exactly 0..{n_classes - 1}"
                )
        object.__setattr__(self, "location_ids", ids)
        object.__setattr__(self, "targets", _readonly(targets))
        object.__setattr__(self, "target_names", names)
        object.__setattr__(self, "n_classes", n_classes)

    def __len__(self):
        return len(self.location_ids)

    @property
    def labels(self):
        if self.kind != "multiclass":
            raise AttributeError("labels are only defined for multiclass tasks")
        return self.targets[:, 0].astype(np.int64)

    def take(self, index):
        index = np.asarray(index, dtype=np.intp)
        return TaskTable(
            self.task_name,
            self.kind,
            self.targets[index],
            self.target_names,
            tuple(self.location_ids[i] for i in index),
            n_classes=self.n_classes,
        )

    def column(self, j):
        """Single target column as a univariate regression task."""
        if self.kind != "regression":
            raise ValidationError("only regression tasks can be split by column")
        return TaskTable(
            f"{self.task_name}:{self.target_names[j]}",
            "regression",
            self.targets[:, [j]],
            (self.target_names[j],),
            self.location_ids,
        )


# ---------------------------------------------------------------- loading


def _parse_float(token, path, lineno, column):
    if token.strip().lower() in _REJECTED_TOKENS:
        raise ValidationError(f"{path}:{lineno}: non-finite or empty entry in column {column!r}")
    try:
        value = float(token)
    except ValueError:
        raise ValidationError(
            f"{path}:{lineno}: non-numeric value {token!r} in column {column!r}"
        ) from None
    if not math.isfinite(value):
        raise ValidationError(f"{path}:{lineno}: non-finite entry in column {column!r}")
    return value


def _read_rows(path):
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if not header or header[0] != "id":
            raise ValidationError(f"{path}: first header column must be 'id'")
        if len(header) < 2:
            raise ValidationError(f"{path}: no value columns")
        ids, values = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            ids.append(row[0].strip())
            values.append(
                [_parse_float(tok, path, lineno, col) for tok, col in zip(row[1:], header[1:])]
            )
    if not ids:
        raise ValidationError(f"{path}: no data rows")
    return header, ids, np.array(values, dtype=np.float64)


def load_table(path, schema, *, name=None, kind=None):
    """Load and validate one delimited table.

    Parameters
    ----------
    path : path-like
    schema : {"locations", "embedding", "targets"}
    name : str, optional
        Model or task name; defaults to the file stem.
    kind : {"multiclass", "regression"}, optional
        Required for ``schema="targets"``.
    """
    header, ids, values = _read_rows(path)
    name = name or Path(path).stem
    try:
        if schema == "locations":
            if header != ["id", "lon", "lat"]:
                raise ValidationError(f"{path}: locations header must be id,lon,lat")
            return LocationTable(tuple(ids), values[:, 0], values[:, 1])
        if schema == "embedding":
            return EmbeddingTable(name, values, tuple(ids))
        if schema == "targets":
            if kind not in TASK_KINDS:
                raise ValidationError(f"targets schema needs kind in {TASK_KINDS}")
            if kind == "multiclass" and header != ["id", "label"]:
                raise ValidationError(f"{path}: classification header must be id,label")
            return TaskTable(name, kind, values, tuple(header[1:]), tuple(ids))
    except ValidationError as exc:
        msg = str(exc)
        if not msg.startswith(str(path)):
            msg = f"{path}: {msg}"
        raise ValidationError(msg) from None
    raise ValueError(f"unknown schema {schema!r}")


def write_locations(path, locations):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "lon", "lat"])
        for i, lo, la in zip(locations.ids, locations.lon, locations.lat):
            w.writerow([i, repr(float(lo)), repr(float(la))])


# ------------------------------------------------------------- alignment


def align(locations, *tables):
    """Restrict every table to the common ids, sorted ascending.

    Returns ``(aligned_tables, dropped)`` where ``aligned_tables`` starts with
    the location table and ``dropped`` counts distinct ids not shared by all
    inputs.
    """
    all_tables = (locations, *tables)
    if len(all_tables) < 2:
        raise ValidationError("align needs a location table and at least one other table")
    id_sets = [set(t.location_ids) for t in all_tables]
    common = set.intersection(*id_sets)
    if not common:
        raise ValidationError("tables share no location ids")
    union = set.union(*id_sets)
    order = sorted(common)
    aligned = []
    for t in all_tables:
        pos = {i: k for k, i in enumerate(t.location_ids)}
        aligned.append(t.take([pos[i] for i in order]))
    return aligned, len(union) - len(common)


def _check_aligned(tables):
    ref = tables[0].location_ids
    for t in tables[1:]:
        if t.location_ids != ref:
            raise ValidationError("inputs are not aligned (different ids or order)")


def fuse(embeddings: Sequence[EmbeddingTable]) -> EmbeddingTable:
    """Concatenate aligned embeddings column-wise, in input order."""
    embeddings = list(embeddings)
    if not embeddings:
        raise ValidationError("fuse needs at least one embedding")
    if len(embeddings) == 1:
        return embeddings[0]
    _check_aligned(embeddings)
    return EmbeddingTable(
        "+".join(e.model_name for e in embeddings),
        np.hstack([e.matrix for e in embeddings]),
        embeddings[0].location_ids,
    )


# --------------------------------------------------------- standardising


class Standardizer(BaseEstimator, TransformerMixin):
    """Per-column z-scoring with population standard deviation.

    Zero-variance columns are mapped to zeros instead of raising.
    """

    def fit(self, X, y=None):
        X = as_matrix(X, allow_1d=True)
        self.mean_ = X.mean(axis=0)
        self.scale_ = X.std(axis=0)
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def means(self):
        return self.mean_

    @property
    def stdevs(self):
        return self.scale_

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = as_matrix(X, allow_1d=True)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        safe = np.where(self.scale_ > 0, self.scale_, 1.0)
        out = (X - self.mean_) / safe
        out[:, self.scale_ == 0] = 0.0
        return out

    def inverse_transform(self, Z):
        check_is_fitted(self, "mean_")
        return as_matrix(Z, allow_1d=True) * self.scale_ + self.mean_


def fit_standardizer(matrix, row_subset=None):
    """Fit a :class:`Standardizer` on ``row_subset`` rows of ``matrix``."""
    X = as_matrix(matrix, allow_1d=True)
    if row_subset is not None:
        row_subset = np.asarray(row_subset, dtype=np.intp)
        if row_subset.size == 0:
            raise ValidationError("row_subset is empty")
        X = X[row_subset]
    return Standardizer().fit(X)


# ------------------------------------------------------------------ folds


@dataclass(frozen=True)
class FoldPlan:
    seed: int
    k: int
    test_index_sets: tuple

    @property
    def n(self):
        return sum(len(t) for t in self.test_index_sets)

    def train_indices(self, fold):
        mask = np.ones(self.n, dtype=bool)
        mask[self.test_index_sets[fold]] = False
        return np.flatnonzero(mask)

    def splits(self):
        for f, test in enumerate(self.test_index_sets):
            yield self.train_indices(f), test


def make_folds(n, k, seed):
    """Seeded permutation of ``range(n)`` cut into ``k`` contiguous blocks."""
    n, k, seed = int(n), int(k), int(seed)
    if k < 2:
        raise ValidationError(f"need k >= 2 folds, got {k}")
    if k > n:
        raise ValidationError(f"cannot make {k} folds from {n} rows")
    if seed < 0:
        raise ValidationError("seed must be non-negative")
    perm = np.random.default_rng(seed).permutation(n)
    blocks = tuple(_readonly(np.sort(b)) for b in np.array_split(perm, k))
    return FoldPlan(seed, k, blocks)
