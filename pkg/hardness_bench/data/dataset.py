"""Dataset construction, loading, normalization and splitting.

All functions are pure given their inputs and seed: a ``Dataset`` is never
mutated in place, every transformation returns a new instance.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from hardness_bench.const import MAX_CSV_CLASSES
from hardness_bench.data.enums import BlobLayout
from hardness_bench.exceptions import DatasetError
from hardness_bench.helpers import make_rng

_LOGGER = logging.getLogger(__name__)

# Relative threshold under which a column's spread is treated as zero
ZERO_VARIANCE_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix, dense integer labels and optional raster shape.

    Construction checks shapes, finiteness, label range and grid size.
    Class coverage (every class present) is a property of source datasets,
    checked by ``require_all_classes``; partitions such as a test split may
    legitimately miss classes.
    """

    features: np.ndarray
    labels: np.ndarray
    k: int
    grid_shape: tuple[int, int] | None = None
    feature_names: tuple[str, ...] | None = None
    name: str = field(default="dataset", compare=False)

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        if features.ndim != 2:
            raise DatasetError(f"features must be a 2-D matrix, got shape {features.shape}")
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise DatasetError(f"labels must be a vector of length {features.shape[0]}, got shape {labels.shape}")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            if not np.all(np.equal(np.mod(labels, 1), 0)):
                raise DatasetError("labels must be integer class indices")
        labels = labels.astype(np.int64)
        if int(self.k) < 2:
            raise DatasetError(f"class count must be >= 2, got {self.k}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.k):
            raise DatasetError(f"labels must lie in [0, {self.k}), found range [{labels.min()}, {labels.max()}]")
        if not np.all(np.isfinite(features)):
            row, col = np.argwhere(~np.isfinite(features))[0]
            raise DatasetError(f"non-finite feature value at row {row}, column {col}")
        if self.grid_shape is not None:
            h, w = (int(v) for v in self.grid_shape)
            if h * w != features.shape[1]:
                raise DatasetError(f"grid shape {h}x{w} does not match {features.shape[1]} features")
            object.__setattr__(self, "grid_shape", (h, w))
        if self.feature_names is not None:
            names = tuple(str(v) for v in self.feature_names)
            if len(names) != features.shape[1]:
                raise DatasetError(f"expected {features.shape[1]} feature names, got {len(names)}")
            object.__setattr__(self, "feature_names", names)
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "k", int(self.k))

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def d(self) -> int:
        return int(self.features.shape[1])

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    def require_all_classes(self) -> "Dataset":
        """Raise unless every class index in [0, k) appears at least once."""
        missing = np.flatnonzero(self.class_counts == 0)
        if missing.size:
            raise DatasetError(f"classes {missing.tolist()} have no samples")
        return self

    def with_features(self, features: np.ndarray) -> "Dataset":
        return replace(self, features=features)

    def with_labels(self, labels: np.ndarray) -> "Dataset":
        return replace(self, labels=labels)

    def subset(self, indices: np.ndarray) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return replace(self, features=self.features[indices], labels=self.labels[indices])

    def describe(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "d": self.d,
            "k": self.k,
            "grid_shape": list(self.grid_shape) if self.grid_shape else None,
            "class_counts": self.class_counts.tolist(),
        }


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.train_fraction <= 1.0) or not math.isfinite(self.train_fraction):
            raise DatasetError(f"train_fraction must be in (0, 1], got {self.train_fraction}")


def _balanced_labels(n: int, k: int) -> np.ndarray:
    """Class sizes differ by at most one; the first n % k classes get the extra sample."""
    sizes = np.full(k, n // k)
    sizes[: n % k] += 1
    return np.repeat(np.arange(k), sizes)


def blob_centers(d: int, k: int, separation: float, layout: BlobLayout = BlobLayout.POLYGON) -> np.ndarray:
    """Cluster centres whose pairwise distances are all at least ``separation``.

    Polygon layout puts the centres on a regular k-gon in the first two
    dimensions with adjacent chord equal to the separation; line layout (and
    any d = 1 data) spaces them along feature 0.
    """
    centers = np.zeros((k, d))
    if layout is BlobLayout.LINE or d == 1:
        centers[:, 0] = (np.arange(k) - (k - 1) / 2.0) * separation
        return centers
    if k == 2:
        centers[:, 0] = [separation / 2.0, -separation / 2.0]
        return centers
    radius = separation / (2.0 * math.sin(math.pi / k))
    angles = 2.0 * math.pi * np.arange(k) / k
    centers[:, 0] = radius * np.cos(angles)
    centers[:, 1] = radius * np.sin(angles)
    return centers


def generate_blobs(
    n: int,
    d: int,
    k: int,
    separation: float,
    seed: int,
    layout: BlobLayout | str = BlobLayout.POLYGON,
) -> Dataset:
    """Generate k isotropic unit-variance Gaussian clusters with balanced class counts."""
    if k < 2:
        raise DatasetError(f"k must be >= 2, got {k}")
    if n < k:
        raise DatasetError(f"n must be >= k, got n={n}, k={k}")
    if d < 1:
        raise DatasetError(f"d must be >= 1, got {d}")
    if not math.isfinite(separation) or separation < 0:
        raise DatasetError(f"separation must be finite and >= 0, got {separation}")
    layout = BlobLayout(layout)

    rng = make_rng(seed, "blobs")
    labels = _balanced_labels(n, k)
    centers = blob_centers(d, k, separation, layout)
    features = centers[labels] + rng.standard_normal((n, d))
    order = rng.permutation(n)
    return Dataset(
        features=features[order],
        labels=labels[order],
        k=k,
        feature_names=tuple(f"x{j}" for j in range(d)),
        name="blobs",
    ).require_all_classes()


def generate_patterns(n: int, k: int, side: int, noise: float, seed: int) -> Dataset:
    """Generate a raster dataset of class-specific Gaussian bumps plus pixel noise.

    Class c is a bump centred on a ring around the raster centre at angle
    2*pi*c/k, so translation, magnification and texture changes all alter
    the class evidence.
    """
    if k < 2:
        raise DatasetError(f"k must be >= 2, got {k}")
    if n < k:
        raise DatasetError(f"n must be >= k, got n={n}, k={k}")
    if side < 4:
        raise DatasetError(f"side must be >= 4, got {side}")
    if not math.isfinite(noise) or noise < 0:
        raise DatasetError(f"noise must be finite and >= 0, got {noise}")

    rng = make_rng(seed, "patterns")
    labels = _balanced_labels(n, k)
    rows, cols = np.mgrid[0:side, 0:side].astype(np.float64)
    centre = (side - 1) / 2.0
    ring = side / 4.0
    width = max(side / 6.0, 0.75)
    prototypes = np.empty((k, side * side))
    for c in range(k):
        angle = 2.0 * math.pi * c / k
        cy = centre + ring * math.sin(angle)
        cx = centre + ring * math.cos(angle)
        bump = np.exp(-((rows - cy) ** 2 + (cols - cx) ** 2) / (2.0 * width**2))
        prototypes[c] = bump.ravel()
    features = prototypes[labels] + noise * rng.standard_normal((n, side * side))
    order = rng.permutation(n)
    return Dataset(
        features=features[order],
        labels=labels[order],
        k=k,
        grid_shape=(side, side),
        feature_names=tuple(f"px_{r}_{c}" for r in range(side) for c in range(side)),
        name="patterns",
    ).require_all_classes()


def load_csv(path: str | Path, target_column: str) -> Dataset:
    """Load a headed, comma-separated UTF-8 file.

    Non-target columns must be numeric and become features; target values are
    relabeled to 0..k-1 in order of first appearance. Row order is preserved.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"CSV file not found: {path}")
    try:
        frame = pd.read_csv(path, encoding="utf-8", float_precision="round_trip")
    except pd.errors.EmptyDataError as e:
        raise DatasetError(f"CSV file is empty: {path}") from e
    if frame.empty:
        raise DatasetError(f"CSV file has no data rows: {path}")
    if target_column not in frame.columns:
        raise DatasetError(f"target column {target_column!r} not in {list(frame.columns)}")

    target = frame[target_column]
    if target.isna().any():
        row = int(np.flatnonzero(target.isna().to_numpy())[0])
        raise DatasetError(f"missing target value at row {row + 1}, column {target_column!r}")
    classes = pd.unique(target)
    if len(classes) > MAX_CSV_CLASSES:
        raise DatasetError(f"target has {len(classes)} distinct values, at most {MAX_CSV_CLASSES} supported")
    if len(classes) < 2:
        raise DatasetError(f"target column {target_column!r} has fewer than 2 classes")
    mapping = {value: index for index, value in enumerate(classes)}
    labels = target.map(mapping).to_numpy(dtype=np.int64)

    feature_columns = [c for c in frame.columns if c != target_column]
    if not feature_columns:
        raise DatasetError(f"no feature columns besides {target_column!r}")
    matrix = np.empty((len(frame), len(feature_columns)))
    for j, column in enumerate(feature_columns):
        values = pd.to_numeric(frame[column], errors="coerce").to_numpy(dtype=np.float64)
        bad = ~np.isfinite(values)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise DatasetError(
                f"non-numeric or non-finite value {frame[column].iloc[row]!r} at row {row + 1}, column {column!r}"
            )
        matrix[:, j] = values

    _LOGGER.info("Loaded %s: %d rows, %d features, %d classes", path, matrix.shape[0], matrix.shape[1], len(classes))
    return Dataset(
        features=matrix,
        labels=labels,
        k=len(classes),
        feature_names=tuple(str(c) for c in feature_columns),
        name=path.stem,
    )


def save_csv(ds: Dataset, path: str | Path, target_column: str = "label") -> Path:
    """Write a dataset in the format ``load_csv`` reads, with full float precision."""
    path = Path(path)
    names = ds.feature_names or tuple(f"x{j}" for j in range(ds.d))
    if target_column in names:
        raise DatasetError(f"target column {target_column!r} collides with a feature name")
    frame = pd.DataFrame(ds.features, columns=list(names))
    frame[target_column] = ds.labels
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, encoding="utf-8")
    return path


def standardize(ds: Dataset) -> Dataset:
    """Zero-mean, unit population standard deviation per column.

    Columns whose spread is zero (relative to their magnitude) become all-zero.
    """
    features = ds.features
    if ds.n == 0:
        return ds
    mean = features.mean(axis=0)
    centered = features - mean
    std = np.sqrt(np.mean(centered**2, axis=0))
    degenerate = std <= ZERO_VARIANCE_TOLERANCE * np.maximum(1.0, np.abs(mean))
    if degenerate.any():
        _LOGGER.warning("Zero-variance columns set to 0: %s", np.flatnonzero(degenerate).tolist())
    scale = np.where(degenerate, 1.0, std)
    out = np.where(degenerate, 0.0, centered / scale)
    return ds.with_features(out)


def split_indices(labels: np.ndarray, k: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Stratified, seeded partition of sample indices into (train, test), both sorted."""
    labels = np.asarray(labels)
    rng = make_rng(spec.seed, "split")
    train_parts = []
    test_parts = []
    for c in range(k):
        members = np.flatnonzero(labels == c)
        if members.size == 0:
            continue
        members = members[rng.permutation(members.size)]
        take = int(math.floor(spec.train_fraction * members.size + 0.5))
        train_parts.append(members[:take])
        test_parts.append(members[take:])
    train = np.sort(np.concatenate(train_parts)) if train_parts else np.empty(0, dtype=np.int64)
    test = np.sort(np.concatenate(test_parts)) if test_parts else np.empty(0, dtype=np.int64)
    if train.size == 0:
        raise DatasetError(f"train_fraction {spec.train_fraction} leaves the train partition empty")
    return train.astype(np.int64), test.astype(np.int64)


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    train, test = split_indices(ds.labels, ds.k, spec)
    return ds.subset(train), ds.subset(test)
