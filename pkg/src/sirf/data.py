"""Datasets, CSV ingestion, train/test splitting and bootstrap resampling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised for malformed input data (bad CSV cells, invalid labels, ...)."""


@dataclass(frozen=True)
class Dataset:
    """An n x p feature matrix with binary responses.

    Arrays are copied and frozen on construction so a Dataset can be shared
    between workers without defensive copies.
    """

    features: np.ndarray
    responses: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64, copy=True)
        y = np.array(self.responses, copy=True)
        if x.ndim != 2:
            raise DataError(f"features must be 2-d, got shape {x.shape}")
        n, p = x.shape
        if n < 2 or p < 1:
            raise DataError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if not np.all(np.isfinite(x)):
            raise DataError("features contain NaN or infinite values")
        if y.shape != (n,):
            raise DataError(f"responses must have shape ({n},), got {y.shape}")
        if not np.all((y == 0) | (y == 1)):
            raise DataError("responses must be 0 or 1")
        names = tuple(str(s) for s in self.feature_names)
        if len(names) != p:
            raise DataError(f"expected {p} feature names, got {len(names)}")
        if any(not s for s in names):
            raise DataError("feature names must be nonempty")
        if len(set(names)) != p:
            raise DataError("feature names must be unique")
        y = y.astype(np.int64)
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "responses", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def take(self, rows) -> "Dataset":
        """Row subset (duplicates allowed, as produced by bootstrapping)."""
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.features[rows], self.responses[rows], self.feature_names)

    def has_both_classes(self) -> bool:
        return bool(self.responses.min() == 0 and self.responses.max() == 1)


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float
    seed: int = 0


@dataclass(frozen=True)
class BootstrapSample:
    indices: np.ndarray
    oob_indices: np.ndarray


def default_feature_names(p: int) -> tuple[str, ...]:
    return tuple(f"x{j + 1}" for j in range(p))


def load_csv(path, response_column: str, bool_tokens: bool = False) -> Dataset:
    """Read a comma-delimited file with a header row into a Dataset.

    The response column is removed from the features; the remaining columns
    keep their file order. With ``bool_tokens`` the response may also be
    spelled ``true``/``false`` (case-insensitive).
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        if response_column not in header:
            raise DataError(f"{path}: response column {response_column!r} not in header")
        ycol = header.index(response_column)
        names = [h for k, h in enumerate(header) if k != ycol]
        tokens = {"0": 0, "1": 1}
        if bool_tokens:
            tokens.update({"false": 0, "true": 1})
        rows, labels = [], []
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(header):
                raise DataError(
                    f"{path}: row {lineno} has {len(record)} fields, expected {len(header)}"
                )
            label = tokens.get(record[ycol].strip().lower())
            if label is None:
                raise DataError(
                    f"{path}: row {lineno}, column {response_column!r}: "
                    f"non-binary response value {record[ycol]!r}"
                )
            values = []
            for k, cell in enumerate(record):
                if k == ycol:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {lineno}, column {header[k]!r}: "
                        f"non-numeric value {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(
                        f"{path}: row {lineno}, column {header[k]!r}: non-finite value {cell!r}"
                    )
                values.append(v)
            rows.append(values)
            labels.append(label)
    if not rows:
        raise DataError(f"{path}: no data rows")
    x = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    return Dataset(x, np.array(labels), names)


def write_csv(d: Dataset, path, response_column: str = "y") -> None:
    """Write a Dataset so that ``load_csv`` reads it back bit-exactly."""
    if response_column in d.feature_names:
        raise DataError(f"response column {response_column!r} clashes with a feature name")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*d.feature_names, response_column])
        for row, label in zip(d.features, d.responses):
            w.writerow([repr(float(v)) for v in row] + [str(int(label))])


def split(d: Dataset, s: SplitSpec) -> tuple[Dataset, Dataset]:
    """Random train/test partition with ``round(n * test_fraction)`` test rows.

    Rounding is half-up, so n=7809 at 0.499 gives 3912 train / 3897 test rows.
    """
    if not 0.0 < s.test_fraction < 1.0:
        raise DataError(f"test_fraction must lie in (0, 1), got {s.test_fraction}")
    n_test = int(math.floor(d.n * s.test_fraction + 0.5))
    if math.floor(d.n * s.test_fraction) < 1 or n_test >= d.n:
        raise DataError(f"degenerate split: n={d.n}, test_fraction={s.test_fraction}")
    perm = np.random.default_rng(s.seed).permutation(d.n)
    test_rows = np.sort(perm[:n_test])
    train_rows = np.sort(perm[n_test:])
    return d.take(train_rows), d.take(test_rows)


def bootstrap_indices(n: int, rng: np.random.Generator) -> BootstrapSample:
    if n < 2:
        raise DataError(f"bootstrap needs n >= 2, got {n}")
    idx = rng.integers(0, n, size=n)
    seen = np.zeros(n, dtype=bool)
    seen[idx] = True
    return BootstrapSample(idx, np.flatnonzero(~seen))


def bootstrap(d: Dataset, seed) -> BootstrapSample:
    """Draw n rows with replacement; the rows never drawn are out-of-bag."""
    return bootstrap_indices(d.n, np.random.default_rng(seed))


def load_feature_matrix(path, feature_names) -> np.ndarray:
    """Read the named columns of a CSV (other columns are ignored)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        missing = [name for name in feature_names if name not in header]
        if missing:
            raise DataError(f"{path}: missing feature columns {missing}")
        cols = [header.index(name) for name in feature_names]
        rows = []
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            values = []
            for k in cols:
                try:
                    v = float(record[k])
                except (ValueError, IndexError):
                    raise DataError(f"{path}: row {lineno}, column {header[k]!r}: "
                                    f"non-numeric value") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {lineno}, column {header[k]!r}: non-finite value")
                values.append(v)
            rows.append(values)
    return np.array(rows, dtype=np.float64).reshape(len(rows), len(feature_names))
