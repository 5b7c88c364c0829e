"""Hardness perturbations producing a perturbed dataset and ground-truth flags.

Label-space kinds (mislabeling) only ever touch labels; feature-space kinds
(near/far OoD, atypical) only ever touch features. Every random draw comes
from a Philox stream keyed by the HardnessSpec seed, so a perturbation is
bit-reproducible from (dataset, spec).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import ndimage
from sklearn.decomposition import PCA

from hardness_bench.const import (
    DEFAULT_COVARIATE_SIGMA,
    DEFAULT_DIRICHLET_ALPHA,
    DEFAULT_SHIFT_PIXELS,
    DEFAULT_TAIL_QUANTILE,
    DEFAULT_ZOOM_FACTOR,
    INSTANCE_PCA_COMPONENTS,
    MAX_PROPORTION,
)
from hardness_bench.data.dataset import Dataset
from hardness_bench.data.enums import HardnessKind
from hardness_bench.exceptions import HardnessError
from hardness_bench.helpers import make_rng

_LOGGER = logging.getLogger(__name__)

# Tolerance when checking that rule probabilities sum to one
RULE_SUM_TOLERANCE = 1e-9

# Guard against floating error in floor(p * n), e.g. 0.29 * 100 = 28.999...
FLOOR_EPSILON = 1e-9


@dataclass(frozen=True, eq=False)
class FlagSet:
    """Ground-truth membership of the hard partition (True = perturbed)."""

    flags: np.ndarray

    def __post_init__(self):
        flags = np.array(self.flags, dtype=bool)
        flags.setflags(write=False)
        object.__setattr__(self, "flags", flags)

    @property
    def count(self) -> int:
        return int(self.flags.sum())

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.flags)

    def __len__(self) -> int:
        return int(self.flags.shape[0])


@dataclass(frozen=True)
class RuleMatrix:
    """Per-class wrong-label distributions: ``rules[c] = ((target, prob), ...)``."""

    rules: dict[int, tuple[tuple[int, float], ...]]

    def __post_init__(self):
        cleaned = {}
        for source, targets in self.rules.items():
            source = int(source)
            entries = tuple((int(t), float(p)) for t, p in targets)
            if not entries:
                raise HardnessError(f"rule for class {source} has no targets")
            for target, prob in entries:
                if target == source:
                    raise HardnessError(f"rule for class {source} maps to itself")
                if prob < 0 or not math.isfinite(prob):
                    raise HardnessError(f"rule {source}->{target} has invalid probability {prob}")
            total = sum(p for _, p in entries)
            if abs(total - 1.0) > RULE_SUM_TOLERANCE:
                raise HardnessError(f"rule for class {source} sums to {total}, expected 1")
            cleaned[source] = entries
        object.__setattr__(self, "rules", cleaned)

    @classmethod
    def from_targets(cls, mapping: dict[int, list[int]]) -> "RuleMatrix":
        """Build rules spreading probability uniformly over each listed target set."""
        return cls({int(c): tuple((int(t), 1.0 / len(ts)) for t in ts) for c, ts in mapping.items() if ts})

    @classmethod
    def from_dict(cls, payload: dict) -> "RuleMatrix":
        return cls({int(c): tuple((int(t), float(p)) for t, p in entries) for c, entries in payload.items()})

    def to_dict(self) -> dict[str, list[list[float]]]:
        return {str(c): [[t, p] for t, p in entries] for c, entries in sorted(self.rules.items())}

    def to_matrix(self, k: int) -> np.ndarray:
        matrix = np.zeros((k, k))
        for source, entries in self.rules.items():
            for target, prob in entries:
                if not (0 <= source < k and 0 <= target < k):
                    raise HardnessError(f"rule {source}->{target} outside [0, {k})")
                matrix[source, target] += prob
        return matrix


@dataclass(frozen=True)
class HardnessSpec:
    """Taxonomy-typed perturbation recipe.

    Kind-specific parameters are plain fields; only those relevant for
    ``kind`` are read. Composite specs apply ``parts`` in order to one shared
    flag set drawn from the composite's own proportion and seed.
    """

    kind: HardnessKind
    proportion: float
    seed: int = 0
    alpha: float = DEFAULT_DIRICHLET_ALPHA
    sigma: float = DEFAULT_COVARIATE_SIGMA
    quantile: float = DEFAULT_TAIL_QUANTILE
    pixels: int = DEFAULT_SHIFT_PIXELS
    factor: float = DEFAULT_ZOOM_FACTOR
    rules: RuleMatrix | None = None
    parts: tuple["HardnessSpec", ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "kind", HardnessKind(self.kind))
        object.__setattr__(self, "parts", tuple(self.parts))
        if not (0.0 <= self.proportion <= MAX_PROPORTION):
            raise HardnessError(f"proportion must be in [0, {MAX_PROPORTION}], got {self.proportion}")
        kind = self.kind
        if kind is HardnessKind.MISLABEL_ASYMMETRIC and not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise HardnessError(f"Dirichlet alpha must be > 0, got {self.alpha}")
        if kind is HardnessKind.NEAR_OOD_COVARIATE and not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise HardnessError(f"sigma must be finite and > 0, got {self.sigma}")
        if kind is HardnessKind.ATYPICAL_TAIL and not (0.5 < self.quantile < 1.0):
            raise HardnessError(f"quantile must be in (0.5, 1), got {self.quantile}")
        if kind is HardnessKind.ATYPICAL_CROP_SHIFT and int(self.pixels) < 1:
            raise HardnessError(f"pixels must be >= 1, got {self.pixels}")
        if kind is HardnessKind.ATYPICAL_ZOOM and not (self.factor > 1 and math.isfinite(self.factor)):
            raise HardnessError(f"zoom factor must be > 1, got {self.factor}")
        if kind is HardnessKind.COMPOSITE:
            if not self.parts:
                raise HardnessError("composite spec needs at least one part")
            if any(part.kind is HardnessKind.COMPOSITE for part in self.parts):
                raise HardnessError("composite specs cannot be nested")
        elif self.parts:
            raise HardnessError(f"{kind.value} spec cannot carry parts")

    @property
    def requires_grid(self) -> bool:
        if self.kind is HardnessKind.COMPOSITE:
            return any(part.requires_grid for part in self.parts)
        return self.kind.requires_grid

    def to_dict(self) -> dict[str, Any]:
        payload: dict[str, Any] = {"kind": self.kind.value, "proportion": self.proportion, "seed": self.seed}
        kind = self.kind
        if kind is HardnessKind.MISLABEL_ASYMMETRIC:
            payload["alpha"] = self.alpha
        elif kind is HardnessKind.NEAR_OOD_COVARIATE:
            payload["sigma"] = self.sigma
        elif kind is HardnessKind.ATYPICAL_TAIL:
            payload["quantile"] = self.quantile
        elif kind is HardnessKind.ATYPICAL_CROP_SHIFT:
            payload["pixels"] = int(self.pixels)
        elif kind is HardnessKind.ATYPICAL_ZOOM:
            payload["factor"] = self.factor
        if self.rules is not None:
            payload["rules"] = self.rules.to_dict()
        if self.parts:
            payload["parts"] = [part.to_dict() for part in self.parts]
        return payload

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "HardnessSpec":
        payload = dict(payload)
        rules = payload.pop("rules", None)
        parts = payload.pop("parts", ())
        return cls(
            rules=RuleMatrix.from_dict(rules) if rules is not None else None,
            parts=tuple(cls.from_dict(part) for part in parts),
            **payload,
        )


@dataclass(frozen=True, eq=False)
class PerturbationResult:
    dataset: Dataset
    flags: FlagSet
    metadata: dict[str, Any]


def flag_count(n: int, p: float) -> int:
    return int(math.floor(p * n + FLOOR_EPSILON))


def select_flags(n: int, p: float, seed: int) -> FlagSet:
    """Flag a uniformly random subset of exactly floor(p * n) samples."""
    if not (0.0 <= p <= MAX_PROPORTION):
        raise HardnessError(f"proportion must be in [0, {MAX_PROPORTION}], got {p}")
    count = flag_count(n, p)
    flags = np.zeros(n, dtype=bool)
    if count:
        rng = make_rng(seed, "flags")
        flags[rng.choice(n, size=count, replace=False)] = True
    return FlagSet(flags)


def _sample_rows(rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one column index per row of a row-stochastic matrix, never a zero-probability column."""
    if rows.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    cdf = np.cumsum(rows, axis=1)
    u = rng.random(rows.shape[0]) * cdf[:, -1]
    picks = (cdf <= u[:, None]).sum(axis=1)
    picks = np.minimum(picks, rows.shape[1] - 1)
    invalid = rows[np.arange(rows.shape[0]), picks] <= 0
    if invalid.any():
        picks[invalid] = np.argmax(rows[invalid], axis=1)
    return picks.astype(np.int64)


def _check_flags(labels: np.ndarray, flags: FlagSet | np.ndarray) -> np.ndarray:
    mask = flags.flags if isinstance(flags, FlagSet) else np.asarray(flags, dtype=bool)
    if mask.shape[0] != np.asarray(labels).shape[0]:
        raise HardnessError(f"flag vector length {mask.shape[0]} does not match {np.asarray(labels).shape[0]} samples")
    return mask


def mislabel_uniform(labels: np.ndarray, flags: FlagSet | np.ndarray, k: int, seed: int) -> np.ndarray:
    """Replace each flagged label by a uniform draw over the k - 1 other classes."""
    if k < 2:
        raise HardnessError(f"k must be >= 2, got {k}")
    mask = _check_flags(labels, flags)
    out = np.array(labels, dtype=np.int64)
    idx = np.flatnonzero(mask)
    rng = make_rng(seed, HardnessKind.MISLABEL_UNIFORM.value)
    offsets = rng.integers(0, k - 1, size=idx.size)
    out[idx] = offsets + (offsets >= out[idx])
    return out


def dirichlet_transition(k: int, alpha: float, seed: int) -> np.ndarray:
    """Row-stochastic k x k matrix, zero diagonal, one Dirichlet draw per row."""
    if not (alpha > 0 and math.isfinite(alpha)):
        raise HardnessError(f"Dirichlet alpha must be > 0, got {alpha}")
    rng = make_rng(seed, "transition")
    transition = np.zeros((k, k))
    for row in range(k):
        others = [c for c in range(k) if c != row]
        weights = rng.dirichlet(np.full(k - 1, alpha)) if k > 2 else np.ones(1)
        transition[row, others] = weights
    return transition


def mislabel_asymmetric(
    labels: np.ndarray, flags: FlagSet | np.ndarray, k: int, alpha: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Resample flagged labels from a per-class Dirichlet transition row."""
    if k < 2:
        raise HardnessError(f"k must be >= 2, got {k}")
    transition = dirichlet_transition(k, alpha, seed)
    mask = _check_flags(labels, flags)
    out = np.array(labels, dtype=np.int64)
    idx = np.flatnonzero(mask)
    rng = make_rng(seed, HardnessKind.MISLABEL_ASYMMETRIC.value)
    out[idx] = _sample_rows(transition[out[idx]], rng)
    return out, transition


def mislabel_adjacent(labels: np.ndarray, flags: FlagSet | np.ndarray, k: int, seed: int) -> np.ndarray:
    """Move flagged class c to c - 1 or c + 1; classes 0 and k - 1 only move inward."""
    if k < 2:
        raise HardnessError(f"k must be >= 2, got {k}")
    mask = _check_flags(labels, flags)
    out = np.array(labels, dtype=np.int64)
    idx = np.flatnonzero(mask)
    rng = make_rng(seed, HardnessKind.MISLABEL_ADJACENT.value)
    step = np.where(rng.random(idx.size) < 0.5, -1, 1)
    current = out[idx]
    step[current == 0] = 1
    step[current == k - 1] = -1
    out[idx] = current + step
    return out


def build_instance_rules(ds: Dataset) -> RuleMatrix:
    """Map every class to the other class whose centroid is nearest in PCA space."""
    if ds.k < 2:
        raise HardnessError(f"k must be >= 2, got {ds.k}")
    counts = ds.class_counts
    if np.any(counts == 0):
        raise HardnessError(f"classes {np.flatnonzero(counts == 0).tolist()} have no samples")

    components = min(ds.d, INSTANCE_PCA_COMPONENTS, ds.n)
    embedded = ds.features
    if components >= 1 and np.any(ds.features.var(axis=0) > 0):
        try:
            embedded = PCA(n_components=components, svd_solver="full").fit_transform(ds.features)
        except (ValueError, np.linalg.LinAlgError) as e:
            _LOGGER.warning("PCA failed (%s); using raw features for instance rules", e)
            embedded = ds.features
        if not np.all(np.isfinite(embedded)):
            _LOGGER.warning("Degenerate PCA projection; using raw features for instance rules")
            embedded = ds.features
    else:
        _LOGGER.warning("Degenerate covariance; using raw features for instance rules")

    centroids = np.stack([embedded[ds.labels == c].mean(axis=0) for c in range(ds.k)])
    distances = np.linalg.norm(centroids[:, None, :] - centroids[None, :, :], axis=2)
    np.fill_diagonal(distances, np.inf)
    nearest = np.argmin(distances, axis=1)
    return RuleMatrix({c: ((int(nearest[c]), 1.0),) for c in range(ds.k)})


def mislabel_instance(labels: np.ndarray, flags: FlagSet | np.ndarray, rules: RuleMatrix, seed: int) -> np.ndarray:
    """Resample each flagged label from its class's rule distribution."""
    mask = _check_flags(labels, flags)
    out = np.array(labels, dtype=np.int64)
    present = np.unique(out)
    missing = [int(c) for c in present if int(c) not in rules.rules]
    if missing:
        raise HardnessError(f"no instance rule for classes {missing}")
    k = int(max(present.max(initial=0), *(t for entries in rules.rules.values() for t, _ in entries))) + 1
    matrix = rules.to_matrix(max(k, len(rules.rules)))
    idx = np.flatnonzero(mask)
    rng = make_rng(seed, HardnessKind.MISLABEL_INSTANCE.value)
    out[idx] = _sample_rows(matrix[out[idx]], rng)
    return out


def perturb_near_ood_covariate(X: np.ndarray, flags: FlagSet | np.ndarray, sigma: float, seed: int) -> np.ndarray:
    """Add N(0, sigma^2 I) noise to flagged rows."""
    if not (math.isfinite(sigma) and sigma > 0):
        raise HardnessError(f"sigma must be finite and > 0, got {sigma}")
    X = np.asarray(X, dtype=np.float64)
    mask = _check_flags(X, flags)
    out = X.copy()
    idx = np.flatnonzero(mask)
    rng = make_rng(seed, HardnessKind.NEAR_OOD_COVARIATE.value)
    out[idx] = X[idx] + sigma * rng.standard_normal((idx.size, X.shape[1]))
    return out


def _require_grid(grid_shape: tuple[int, int] | None, d: int) -> tuple[int, int]:
    if grid_shape is None:
        raise HardnessError("this perturbation needs a dataset with a grid shape")
    h, w = grid_shape
    if h * w != d:
        raise HardnessError(f"grid shape {h}x{w} does not match {d} features")
    return int(h), int(w)


def domain_shift_raster(img: np.ndarray) -> np.ndarray:
    """Sobel gradient magnitude, 3x3 median filter, rescaled to the input's range.

    Borders replicate edge pixels. A constant raster yields an all-zero edge map.
    """
    lo, hi = float(img.min()), float(img.max())
    gy = ndimage.sobel(img, axis=0, mode="nearest")
    gx = ndimage.sobel(img, axis=1, mode="nearest")
    edges = ndimage.median_filter(np.hypot(gx, gy), size=3, mode="nearest")
    if hi <= lo:
        return np.zeros_like(img)
    e_lo, e_hi = float(edges.min()), float(edges.max())
    if e_hi <= e_lo:
        return np.full_like(img, lo)
    return lo + (edges - e_lo) * ((hi - lo) / (e_hi - e_lo))


def perturb_near_ood_domain(
    X: np.ndarray, flags: FlagSet | np.ndarray, grid_shape: tuple[int, int] | None, seed: int
) -> np.ndarray:
    """Replace flagged rasters by their median-smoothed edge maps (deterministic; seed unused)."""
    X = np.asarray(X, dtype=np.float64)
    h, w = _require_grid(grid_shape, X.shape[1])
    mask = _check_flags(X, flags)
    out = X.copy()
    for i in np.flatnonzero(mask):
        out[i] = domain_shift_raster(X[i].reshape(h, w)).ravel()
    return out


def _binary_columns(X: np.ndarray) -> list[tuple[int, float, float]]:
    found = []
    for j in range(X.shape[1]):
        values = np.unique(X[:, j])
        if values.size == 2:
            found.append((j, float(values[0]), float(values[1])))
    return found


def perturb_far_ood(ds: Dataset, flags: FlagSet | np.ndarray, seed: int) -> Dataset:
    """Destroy joint feature structure of flagged rows.

    Each column is independently permuted among the flagged rows, then
    binary-valued columns (exactly two distinct values over the dataset) are
    flipped. Labels and unflagged rows are untouched.
    """
    if ds.n < 2:
        raise HardnessError(f"far-OoD needs at least 2 samples, got {ds.n}")
    mask = _check_flags(ds.labels, flags)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return ds
    X = ds.features.copy()
    if idx.size < 2:
        _LOGGER.warning("Far-OoD with %d flagged row(s): column permutation is degenerate", idx.size)
    else:
        rng = make_rng(seed, HardnessKind.FAR_OOD.value)
        for j in range(ds.d):
            X[idx, j] = X[idx[rng.permutation(idx.size)], j]
    for j, low, high in _binary_columns(ds.features):
        column = X[idx, j]
        X[idx, j] = np.where(column == low, high, low)
    return ds.with_features(X)


def select_tail_feature(ds: Dataset) -> int:
    """Index of the feature with maximal absolute Pearson correlation to the label."""
    X = ds.features
    y = ds.labels.astype(np.float64)
    x_std = X.std(axis=0)
    if np.all(x_std == 0):
        raise HardnessError("all features are constant; no tail feature to perturb")
    y_centered = y - y.mean()
    y_std = y.std()
    if y_std == 0:
        # single class present: fall back to the most dispersed feature
        return int(np.argmax(x_std))
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = ((X - X.mean(axis=0)) * y_centered[:, None]).mean(axis=0) / (x_std * y_std)
    corr = np.where(x_std > 0, np.abs(corr), -1.0)
    return int(np.argmax(corr))


def perturb_atypical_tail(ds: Dataset, flags: FlagSet | np.ndarray, quantile: float, seed: int) -> Dataset:
    """Replace the most label-predictive feature of flagged rows with empirical tail values.

    Rows at or above the column median draw from values at or beyond the upper
    ``quantile``; rows below draw from values at or below the ``1 - quantile``
    quantile. Draws are observed values, so the empirical support is kept.
    """
    if not (0.5 < quantile < 1.0):
        raise HardnessError(f"quantile must be in (0.5, 1), got {quantile}")
    mask = _check_flags(ds.labels, flags)
    feature = select_tail_feature(ds)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return ds
    column = ds.features[:, feature]
    upper = np.quantile(column, quantile)
    lower = np.quantile(column, 1.0 - quantile)
    median = np.median(column)
    upper_pool = np.sort(column[column >= upper])
    lower_pool = np.sort(column[column <= lower])
    rng = make_rng(seed, HardnessKind.ATYPICAL_TAIL.value)
    X = ds.features.copy()
    upper_side = column[idx] >= median
    X[idx[upper_side], feature] = upper_pool[rng.integers(0, upper_pool.size, size=int(upper_side.sum()))]
    X[idx[~upper_side], feature] = lower_pool[rng.integers(0, lower_pool.size, size=int((~upper_side).sum()))]
    return ds.with_features(X)


def translate_raster(img: np.ndarray, dy: int, dx: int, fill: float) -> np.ndarray:
    """Shift a raster by (dy, dx) cells; vacated cells get ``fill`` and shifted-out cells are lost."""
    h, w = img.shape
    out = np.full_like(img, fill)
    if abs(dy) >= h or abs(dx) >= w:
        return out
    src_rows = slice(max(0, -dy), h - max(0, dy))
    dst_rows = slice(max(0, dy), h - max(0, -dy))
    src_cols = slice(max(0, -dx), w - max(0, dx))
    dst_cols = slice(max(0, dx), w - max(0, -dx))
    out[dst_rows, dst_cols] = img[src_rows, src_cols]
    return out


def perturb_crop_shift(
    X: np.ndarray, flags: FlagSet | np.ndarray, grid_shape: tuple[int, int] | None, pixels: int, seed: int
) -> np.ndarray:
    """Translate flagged rasters by (+/-pixels, +/-pixels), direction drawn per sample."""
    X = np.asarray(X, dtype=np.float64)
    h, w = _require_grid(grid_shape, X.shape[1])
    if not (1 <= pixels < min(h, w)):
        raise HardnessError(f"pixels must be in [1, {min(h, w)}), got {pixels}")
    mask = _check_flags(X, flags)
    idx = np.flatnonzero(mask)
    rng = make_rng(seed, HardnessKind.ATYPICAL_CROP_SHIFT.value)
    signs = np.where(rng.random((idx.size, 2)) < 0.5, -1, 1)
    out = X.copy()
    for row, (sy, sx) in zip(idx, signs, strict=True):
        img = X[row].reshape(h, w)
        out[row] = translate_raster(img, int(sy) * pixels, int(sx) * pixels, float(img.min())).ravel()
    return out


def zoom_raster(img: np.ndarray, factor: float) -> np.ndarray:
    """Central (h/factor) x (w/factor) crop resampled to h x w by nearest neighbour."""
    h, w = img.shape
    ch, cw = int(math.floor(h / factor)), int(math.floor(w / factor))
    if ch < 1 or cw < 1:
        raise HardnessError(f"zoom factor {factor} leaves a crop smaller than 1x1 on a {h}x{w} raster")
    top, left = (h - ch) // 2, (w - cw) // 2
    crop = img[top : top + ch, left : left + cw]
    rows = np.minimum(np.floor((np.arange(h) + 0.5) * ch / h).astype(int), ch - 1)
    cols = np.minimum(np.floor((np.arange(w) + 0.5) * cw / w).astype(int), cw - 1)
    return crop[np.ix_(rows, cols)]


def perturb_zoom(
    X: np.ndarray, flags: FlagSet | np.ndarray, grid_shape: tuple[int, int] | None, factor: float, seed: int
) -> np.ndarray:
    """Magnify flagged rasters about their centre (deterministic; seed unused)."""
    X = np.asarray(X, dtype=np.float64)
    h, w = _require_grid(grid_shape, X.shape[1])
    if not (factor > 1 and math.isfinite(factor)):
        raise HardnessError(f"zoom factor must be > 1, got {factor}")
    mask = _check_flags(X, flags)
    out = X.copy()
    for i in np.flatnonzero(mask):
        out[i] = zoom_raster(X[i].reshape(h, w), factor).ravel()
    return out


def _apply_kind(ds: Dataset, spec: HardnessSpec, flags: FlagSet, metadata: dict[str, Any]) -> Dataset:
    kind = spec.kind
    metadata["changes"] = "labels" if kind.is_mislabeling else "features"
    if kind.requires_grid:
        _require_grid(ds.grid_shape, ds.d)
    if kind is HardnessKind.MISLABEL_UNIFORM:
        return ds.with_labels(mislabel_uniform(ds.labels, flags, ds.k, spec.seed))
    if kind is HardnessKind.MISLABEL_ASYMMETRIC:
        labels, transition = mislabel_asymmetric(ds.labels, flags, ds.k, spec.alpha, spec.seed)
        metadata["transition"] = transition.tolist()
        return ds.with_labels(labels)
    if kind is HardnessKind.MISLABEL_ADJACENT:
        return ds.with_labels(mislabel_adjacent(ds.labels, flags, ds.k, spec.seed))
    if kind is HardnessKind.MISLABEL_INSTANCE:
        rules = spec.rules if spec.rules is not None else build_instance_rules(ds)
        metadata["rules"] = rules.to_dict()
        return ds.with_labels(mislabel_instance(ds.labels, flags, rules, spec.seed))
    if kind is HardnessKind.NEAR_OOD_COVARIATE:
        return ds.with_features(perturb_near_ood_covariate(ds.features, flags, spec.sigma, spec.seed))
    if kind is HardnessKind.NEAR_OOD_DOMAIN:
        return ds.with_features(perturb_near_ood_domain(ds.features, flags, ds.grid_shape, spec.seed))
    if kind is HardnessKind.FAR_OOD:
        return perturb_far_ood(ds, flags, spec.seed)
    if kind is HardnessKind.ATYPICAL_TAIL:
        metadata["tail_feature"] = select_tail_feature(ds)
        return perturb_atypical_tail(ds, flags, spec.quantile, spec.seed)
    if kind is HardnessKind.ATYPICAL_CROP_SHIFT:
        return ds.with_features(perturb_crop_shift(ds.features, flags, ds.grid_shape, int(spec.pixels), spec.seed))
    if kind is HardnessKind.ATYPICAL_ZOOM:
        return ds.with_features(perturb_zoom(ds.features, flags, ds.grid_shape, spec.factor, spec.seed))
    raise HardnessError(f"unsupported hardness kind {kind}")


def perturb(ds: Dataset, spec: HardnessSpec) -> PerturbationResult:
    """Draw the flag set and apply the perturbation(s) it names.

    Composite specs apply every part to the same flag set in order; each part
    draws its own noise from its own seed, so a part applied on its own with
    the composite's proportion and seed reproduces the composite's flags.
    """
    if spec.requires_grid and ds.grid_shape is None:
        raise HardnessError(f"{spec.kind.value} perturbation needs a dataset with a grid shape")
    flags = select_flags(ds.n, spec.proportion, spec.seed)
    metadata: dict[str, Any] = spec.to_dict()
    metadata["flag_indices"] = flags.indices.tolist()
    metadata["flag_count"] = flags.count
    if flags.count == 0:
        _LOGGER.info("Proportion %s flags no samples out of %d; identity perturbation", spec.proportion, ds.n)
        return PerturbationResult(dataset=ds, flags=flags, metadata=metadata)

    if spec.kind is HardnessKind.COMPOSITE:
        perturbed = ds
        part_meta = []
        for part in spec.parts:
            meta: dict[str, Any] = part.to_dict()
            perturbed = _apply_kind(perturbed, part, flags, meta)
            part_meta.append(meta)
        metadata["parts"] = part_meta
    else:
        perturbed = _apply_kind(ds, spec, flags, metadata)
    _LOGGER.debug("Applied %s to %d of %d samples", spec.kind.value, flags.count, ds.n)
    return PerturbationResult(dataset=perturbed, flags=flags, metadata=metadata)
